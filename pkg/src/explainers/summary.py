"""Per-method explanation quality over a set of explained instances, plus plot-data export."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from src.errors import NoCounterfactualFound
from src.explainers.anchors import AnchorSampler, AnchorsConfig, anchors_explain
from src.explainers.counterfactual import CounterfactualConfig, counterfactual_search
from src.explainers.lime import TrainingStats, lime_explain_detailed
from src.explainers.types import FeatureImportanceVector, LimeConfig
from src.surrogate.linear import LinearSurrogate, SurrogateBlackBox, evaluate
from src.utils.random_utils import derive_seed


@dataclass(frozen=True)
class XaiQualitySummary:
    n_instances: int
    coefficients_accuracy: float
    coefficients_f1: float
    lime_fidelity: Optional[float]
    anchors_coverage: Optional[float]
    anchors_precision: Optional[float]
    anchors_below_threshold: int
    cf_proximity: Optional[float]
    cf_sparsity: Optional[float]
    cf_not_found: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "XaiQualitySummary":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


def _mean(values: list[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def summarize_xai_quality(
    model: LinearSurrogate,
    X,
    y,
    rows: Sequence[int],
    feature_names: Sequence[str],
    lime_cfg: LimeConfig = LimeConfig(),
    anchors_cfg: AnchorsConfig = AnchorsConfig(),
    cf_cfg: CounterfactualConfig = CounterfactualConfig(),
    seed: int = 0,
) -> XaiQualitySummary:
    X = np.asarray(X, dtype="float64")
    black_box = SurrogateBlackBox(model)
    stats = TrainingStats.from_matrix(X, feature_names)
    sampler = AnchorSampler(X, feature_names)
    ranges = X.max(axis=0) - X.min(axis=0)
    ev = evaluate(model, X, y)

    fidelity, coverage, precision, proximity, sparsity = [], [], [], [], []
    below, not_found = 0, 0
    for i in rows:
        x = X[i]
        fidelity.append(lime_explain_detailed(black_box, x, stats, lime_cfg).fidelity)

        rule = anchors_explain(black_box, x, sampler, AnchorsConfig(
            anchors_cfg.precision_threshold, anchors_cfg.n_mc, anchors_cfg.beam, derive_seed(seed, "anchors", i)
        ))
        coverage.append(rule.coverage)
        precision.append(rule.precision)
        below += int(not rule.meets_threshold)

        proba = black_box(x[None, :])[0]
        target = int(np.argsort(-proba, kind="stable")[1])
        try:
            cf = counterfactual_search(black_box, x, target, ranges, cf_cfg, feature_names)
            proximity.append(cf.proximity)
            sparsity.append(float(cf.sparsity))
        except NoCounterfactualFound as e:
            not_found += 1
            logger.warning(f"No counterfactual: row={i} reason={e}")

    summary = XaiQualitySummary(
        n_instances=len(rows),
        coefficients_accuracy=ev.accuracy,
        coefficients_f1=ev.macro_f1,
        lime_fidelity=_mean(fidelity),
        anchors_coverage=_mean(coverage),
        anchors_precision=_mean(precision),
        anchors_below_threshold=below,
        cf_proximity=_mean(proximity),
        cf_sparsity=_mean(sparsity),
        cf_not_found=not_found,
    )
    logger.info(
        f"XAI quality: n={summary.n_instances} fidelity={summary.lime_fidelity} "
        f"coverage={summary.anchors_coverage} precision={summary.anchors_precision} "
        f"proximity={summary.cf_proximity} sparsity={summary.cf_sparsity}"
    )
    return summary


def write_importance_csv(vectors: Iterable[FeatureImportanceVector], path: str | Path) -> Path:
    """`instance_id,method,feature,weight` rows, one per feature, ready for bar charts."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    rows = [
        {"instance_id": v.instance_id, "method": v.method, "feature": name, "weight": weight}
        for v in vectors
        for name, weight in v.items
    ]
    pd.DataFrame(rows, columns=["instance_id", "method", "feature", "weight"]).to_csv(p, index=False, lineterminator="\n")
    return p
