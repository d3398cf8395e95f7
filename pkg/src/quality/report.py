"""Per-instance quality reports and the per-(model, technique) summary table."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

import pandas as pd
from loguru import logger

from src.explainers.types import FeatureImportanceVector
from src.llm.parser import ParsedExplanation
from src.quality.content import align_llm_order, content_vectors, euclidean_distance, ndcg_difference, spearman_rank
from src.quality.structure import (
    GrammarChecker,
    ari_readability,
    coherence,
    grammar_error_count,
    sentiment_consistency,
)


METRICS = [
    "coherence",
    "grammar_errors",
    "readability",
    "sentiment_consistency",
    "spearman",
    "ndcg_difference",
    "euclidean",
]
PROVENANCE = ["model", "technique"]


@dataclass(frozen=True)
class QualityReport:
    instance_id: str
    model: str
    technique: str
    coherence: float
    grammar_errors: int
    readability: float
    sentiment_consistency: float
    spearman: float
    ndcg_difference: float
    euclidean: float
    parse_path: str = ""
    missing_features: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["missing_features"] = list(self.missing_features)
        return d


def evaluate_quality(
    prompt_text: str,
    response_text: str,
    parsed: ParsedExplanation,
    ground: FeatureImportanceVector,
    model: str = "",
    technique: str = "",
    instance_id: Optional[str] = None,
    checker: Optional[GrammarChecker] = None,
) -> QualityReport:
    """All seven metrics; structure metrics score the narrative, content metrics the ranking."""
    narrative = parsed.narrative or response_text
    _, missing = align_llm_order(ground, parsed)
    v_ground, v_llm = content_vectors(ground, parsed)
    return QualityReport(
        instance_id=instance_id if instance_id is not None else ground.instance_id,
        model=model,
        technique=technique,
        coherence=coherence(prompt_text, narrative),
        grammar_errors=grammar_error_count(narrative, checker),
        readability=ari_readability(narrative),
        sentiment_consistency=sentiment_consistency(prompt_text, narrative),
        spearman=spearman_rank(ground, parsed),
        ndcg_difference=ndcg_difference(ground, parsed),
        euclidean=euclidean_distance(v_ground, v_llm),
        parse_path=parsed.parse_path.value,
        missing_features=tuple(missing),
    )


def reports_frame(reports: Iterable[QualityReport]) -> pd.DataFrame:
    columns = ["instance_id", *PROVENANCE, *METRICS, "parse_path"]
    return pd.DataFrame([{c: getattr(r, c) for c in columns} for r in reports], columns=columns)


def summarize_quality(reports: Iterable[QualityReport]) -> pd.DataFrame:
    """Mean of every metric per (model, technique), in first-seen order."""
    frame = reports_frame(reports)
    if frame.empty:
        return pd.DataFrame(columns=[*PROVENANCE, *METRICS, "n"])
    grouped = frame.groupby(PROVENANCE, sort=False)
    summary = grouped[METRICS].mean().reset_index()
    summary["n"] = grouped.size().values
    for _, row in summary.iterrows():
        logger.info(
            f"Quality: model={row['model']} technique={row['technique']} n={row['n']} "
            f"spearman={row['spearman']:.3f} ndcg_difference={row['ndcg_difference']:.3f} "
            f"euclidean={row['euclidean']:.3f}"
        )
    return summary


def write_quality_csv(reports: Iterable[QualityReport], path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    reports_frame(reports).to_csv(p, index=False, lineterminator="\n")
    return p


def write_summary_csv(reports: Iterable[QualityReport], path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    summarize_quality(reports).to_csv(p, index=False, lineterminator="\n")
    return p
