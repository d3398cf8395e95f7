"""Cluster characterization over validation features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.data.schema import Dataset
from src.errors import RowMismatch, TooFewClusters
from src.validity.stats import mann_whitney_u


@dataclass(frozen=True)
class FeatureProfile:
    feature: str
    comparison: str
    means: tuple[float, ...]
    medians: tuple[float, ...]
    u: float
    p_value: float
    significant: bool
    method: str

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "comparison": self.comparison,
            "means": list(self.means),
            "medians": list(self.medians),
            "u": self.u,
            "p_value": self.p_value,
            "significant": self.significant,
            "method": self.method,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureProfile":
        return cls(
            feature=d["feature"],
            comparison=d["comparison"],
            means=tuple(float(v) for v in d["means"]),
            medians=tuple(float(v) for v in d["medians"]),
            u=float(d["u"]),
            p_value=float(d["p_value"]),
            significant=bool(d["significant"]),
            method=d["method"],
        )


@dataclass(frozen=True)
class ClusterProfile:
    cluster_ids: tuple[int, ...]
    display_labels: tuple[str, ...]
    sizes: tuple[int, ...]
    alpha: float
    rows: tuple[FeatureProfile, ...]

    def label_for(self, cluster: int) -> str:
        return self.display_labels[self.cluster_ids.index(int(cluster))]

    def significant_features(self) -> list[str]:
        return sorted({r.feature for r in self.rows if r.significant})

    def to_dict(self) -> dict:
        return {
            "cluster_ids": list(self.cluster_ids),
            "display_labels": list(self.display_labels),
            "sizes": list(self.sizes),
            "alpha": self.alpha,
            "rows": [r.to_dict() for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterProfile":
        return cls(
            cluster_ids=tuple(int(c) for c in d["cluster_ids"]),
            display_labels=tuple(d["display_labels"]),
            sizes=tuple(int(s) for s in d["sizes"]),
            alpha=float(d["alpha"]),
            rows=tuple(FeatureProfile.from_dict(r) for r in d["rows"]),
        )


def characterize_clusters(
    validation: Dataset,
    labels,
    alpha: float = 0.05,
    display_labels: Optional[Sequence[str]] = None,
) -> ClusterProfile:
    """Two clusters: one test per feature. More: each cluster against the rest."""
    labels = np.asarray(labels)
    if labels.shape[0] != validation.n_rows:
        raise RowMismatch(f"{labels.shape[0]} labels for {validation.n_rows} validation rows")
    clusters = [int(c) for c in np.unique(labels[labels >= 0])]
    if len(clusters) < 2:
        raise TooFewClusters("Cluster characterization needs at least 2 clusters")
    names = tuple(display_labels) if display_labels else tuple(f"cluster-{c}" for c in clusters)
    if len(names) != len(clusters):
        raise RowMismatch(f"{len(names)} display labels for {len(clusters)} clusters")

    rows = []
    for j, feature in enumerate(validation.feature_names):
        col = validation.values[:, j]
        groups = [col[labels == c] for c in clusters]
        means = tuple(float(np.mean(g)) for g in groups)
        medians = tuple(float(np.median(g)) for g in groups)
        if len(clusters) == 2:
            pairs = [(f"{names[0]} vs {names[1]}", groups[0], groups[1])]
        else:
            pairs = [(f"{names[i]} vs rest", groups[i], col[(labels >= 0) & (labels != c)]) for i, c in enumerate(clusters)]
        for comparison, a, b in pairs:
            res = mann_whitney_u(a, b)
            rows.append(
                FeatureProfile(
                    feature=feature,
                    comparison=comparison,
                    means=means,
                    medians=medians,
                    u=res.u,
                    p_value=res.p_value,
                    significant=res.p_value < alpha,
                    method=res.method,
                )
            )

    profile = ClusterProfile(
        cluster_ids=tuple(clusters),
        display_labels=names,
        sizes=tuple(int(np.sum(labels == c)) for c in clusters),
        alpha=float(alpha),
        rows=tuple(rows),
    )
    logger.info(
        f"Clusters characterized: features={validation.n_cols} significant={len(profile.significant_features())}"
    )
    return profile
