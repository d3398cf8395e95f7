"""The thesaurus: ground-truth context (profile, surrogate, LIME exemplars) handed to the LLM bridge."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from loguru import logger

from src.clustering.models import Assignment, ClusteringConfig
from src.data.preprocess import NormalizationStats
from src.data.schema import Dataset, Schema, base_feature
from src.errors import EmptyExemplarBank, FingerprintMismatch, RowMismatch, XaiGapError
from src.explainers.lime import TrainingStats, lime_explain_detailed
from src.explainers.summary import XaiQualitySummary
from src.explainers.types import FeatureImportanceVector, LimeConfig
from src.surrogate.linear import EvaluationResult, LinearSurrogate, SurrogateBlackBox, predict
from src.utils.random_utils import derive_seed, rng_for
from src.validity.indices import ValidityReport
from src.validity.profile import ClusterProfile


THESAURUS_VERSION = "1"


@dataclass(frozen=True)
class DatasetFingerprint:
    schema_hash: str
    n_rows: int
    n_cols: int
    feature_names: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "schema_hash": self.schema_hash,
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetFingerprint":
        return cls(
            schema_hash=d["schema_hash"],
            n_rows=int(d["n_rows"]),
            n_cols=int(d["n_cols"]),
            feature_names=tuple(d["feature_names"]),
        )


def dataset_fingerprint(schema: Schema, ds: Dataset) -> DatasetFingerprint:
    return DatasetFingerprint(
        schema_hash=schema.fingerprint(),
        n_rows=ds.n_rows,
        n_cols=ds.n_cols,
        feature_names=ds.feature_names,
    )


@dataclass(frozen=True)
class Exemplar:
    instance_id: str
    features: tuple[tuple[str, float], ...]
    cluster: int
    cluster_label: str
    explanation: FeatureImportanceVector
    fidelity: float

    def feature_values(self) -> dict[str, float]:
        return dict(self.features)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "features": [[n, v] for n, v in self.features],
            "cluster": self.cluster,
            "cluster_label": self.cluster_label,
            "explanation": self.explanation.to_dict(),
            "fidelity": self.fidelity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Exemplar":
        return cls(
            instance_id=d["instance_id"],
            features=tuple((n, float(v)) for n, v in d["features"]),
            cluster=int(d["cluster"]),
            cluster_label=d["cluster_label"],
            explanation=FeatureImportanceVector.from_dict(d["explanation"]),
            fidelity=float(d["fidelity"]),
        )


@dataclass(frozen=True, eq=False)
class Thesaurus:
    fingerprint: DatasetFingerprint
    variant: str
    clustering: ClusteringConfig
    validity: ValidityReport
    profile: ClusterProfile
    surrogate: LinearSurrogate
    surrogate_summary: EvaluationResult
    exemplars: tuple[Exemplar, ...]
    normalization: NormalizationStats
    preamble: str = ""
    glossary: Mapping[str, str] = field(default_factory=dict)
    xai_quality: Optional[XaiQualitySummary] = None
    refinement: Mapping = field(default_factory=dict)
    version: str = THESAURUS_VERSION

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.fingerprint.feature_names

    def exemplar(self, instance_id: str) -> Exemplar:
        for e in self.exemplars:
            if e.instance_id == instance_id:
                return e
        raise KeyError(instance_id)

    def has_exemplar(self, instance_id: str) -> bool:
        return any(e.instance_id == instance_id for e in self.exemplars)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "fingerprint": self.fingerprint.to_dict(),
            "variant": self.variant,
            "clustering": self.clustering.to_dict(),
            "validity": self.validity.to_dict(),
            "profile": self.profile.to_dict(),
            "surrogate": self.surrogate.to_dict(),
            "surrogate_summary": self.surrogate_summary.to_dict(),
            "exemplars": [e.to_dict() for e in self.exemplars],
            "normalization": self.normalization.to_dict(),
            "preamble": self.preamble,
            "glossary": dict(self.glossary),
            "xai_quality": self.xai_quality.to_dict() if self.xai_quality is not None else None,
            "refinement": dict(self.refinement),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Thesaurus":
        summary = d["surrogate_summary"]
        return cls(
            version=str(d["version"]),
            fingerprint=DatasetFingerprint.from_dict(d["fingerprint"]),
            variant=d["variant"],
            clustering=ClusteringConfig.from_dict(d["clustering"]),
            validity=ValidityReport.from_dict(d["validity"]),
            profile=ClusterProfile.from_dict(d["profile"]),
            surrogate=LinearSurrogate.from_dict(d["surrogate"]),
            surrogate_summary=EvaluationResult(
                accuracy=float(summary["accuracy"]),
                macro_f1=float(summary["macro_f1"]),
                absent_classes=tuple(int(c) for c in summary.get("absent_classes", ())),
            ),
            exemplars=tuple(Exemplar.from_dict(e) for e in d["exemplars"]),
            normalization=NormalizationStats.from_dict(d["normalization"]),
            preamble=d.get("preamble", ""),
            glossary=dict(d.get("glossary") or {}),
            xai_quality=XaiQualitySummary.from_dict(d["xai_quality"]) if d.get("xai_quality") else None,
            refinement=dict(d.get("refinement") or {}),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Thesaurus):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def verify_fingerprint(thesaurus: Thesaurus, schema: Schema, ds: Dataset) -> None:
    actual = dataset_fingerprint(schema, ds)
    if actual != thesaurus.fingerprint:
        diffs = [
            name
            for name in ("schema_hash", "n_rows", "n_cols", "feature_names")
            if getattr(actual, name) != getattr(thesaurus.fingerprint, name)
        ]
        raise FingerprintMismatch(f"Dataset does not match the thesaurus fingerprint (differs in: {', '.join(diffs)})")


def original_units(ds: Dataset, normalization: NormalizationStats, row: int) -> tuple[tuple[str, float], ...]:
    """One row mapped back through the normalization; columns it never saw (e.g. pc1) pass through."""
    out = []
    for j, name in enumerate(ds.feature_names):
        value = float(ds.values[row, j])
        if name in normalization.columns:
            value = float(normalization.inverse(np.array([value]), [name])[0])
        out.append((name, value))
    return tuple(out)


def build_glossary(schema: Schema, feature_names: Sequence[str]) -> dict[str, str]:
    glossary = {}
    for name in feature_names:
        base = base_feature(name)
        if base in schema and schema[base].description:
            glossary[name] = schema[base].description
    return glossary


def choose_exemplars(ds: Dataset, labels, n: int, seed: int) -> list[str]:
    """Seeded sample of `n` non-noise row keys, returned in dataset order."""
    labels = np.asarray(labels)
    if labels.shape[0] != ds.n_rows:
        raise RowMismatch(f"{labels.shape[0]} labels for {ds.n_rows} rows")
    candidates = np.flatnonzero(labels >= 0)
    take = min(int(n), candidates.size)
    if take < n:
        logger.warning(f"Only {take} clustered rows available for {n} requested exemplars")
    picked = np.sort(rng_for(seed, "exemplars").choice(candidates, size=take, replace=False))
    return [ds.row_key(int(i)) for i in picked]


def build_thesaurus(
    dataset: Dataset,
    schema: Schema,
    variant: str,
    config: ClusteringConfig,
    assignment: Assignment,
    validity: ValidityReport,
    profile: ClusterProfile,
    surrogate: LinearSurrogate,
    surrogate_summary: EvaluationResult,
    exemplar_ids: Sequence[str],
    normalization: NormalizationStats,
    lime_cfg: LimeConfig = LimeConfig(),
    preamble: str = "",
    xai_quality: Optional[XaiQualitySummary] = None,
    refinement: Optional[Mapping] = None,
) -> Thesaurus:
    if not exemplar_ids:
        raise EmptyExemplarBank("No exemplar instance ids given")
    if assignment.labels.shape[0] != dataset.n_rows:
        raise RowMismatch(f"{assignment.labels.shape[0]} labels for {dataset.n_rows} rows")

    black_box = SurrogateBlackBox(surrogate)
    stats = TrainingStats.from_matrix(dataset.values, dataset.feature_names)
    exemplars = []
    for iid in exemplar_ids:
        row = dataset.row_index(iid)
        cluster = int(assignment.labels[row])
        if cluster < 0:
            logger.warning(f"Exemplar skipped: instance={iid} reason=noise point")
            continue
        cfg = replace(lime_cfg, seed=derive_seed(lime_cfg.seed, "exemplar", iid))
        try:
            result = lime_explain_detailed(black_box, dataset.values[row], stats, cfg, instance_id=iid)
        except XaiGapError as e:
            logger.warning(f"Exemplar skipped: instance={iid} reason={type(e).__name__}: {e}")
            continue
        exemplars.append(
            Exemplar(
                instance_id=iid,
                features=original_units(dataset, normalization, row),
                cluster=cluster,
                cluster_label=profile.label_for(cluster),
                explanation=result.vector,
                fidelity=result.fidelity,
            )
        )
    if not exemplars:
        raise EmptyExemplarBank(f"All {len(exemplar_ids)} exemplars failed to explain")

    agree = float(np.mean(predict(surrogate, dataset.values) == assignment.labels))
    thesaurus = Thesaurus(
        fingerprint=dataset_fingerprint(schema, dataset),
        variant=variant,
        clustering=config,
        validity=validity,
        profile=profile,
        surrogate=surrogate,
        surrogate_summary=surrogate_summary,
        exemplars=tuple(exemplars),
        normalization=normalization,
        preamble=preamble,
        glossary=build_glossary(schema, dataset.feature_names),
        xai_quality=xai_quality,
        refinement=dict(refinement or {}),
    )
    logger.info(
        f"Thesaurus built: variant={variant} exemplars={len(exemplars)} "
        f"mean_fidelity={np.mean([e.fidelity for e in exemplars]):.3f} surrogate_agreement={agree:.3f}"
    )
    return thesaurus
