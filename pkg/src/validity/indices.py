"""Cluster validity indices.

Noise rows (label -1) are dropped before every index. Unbounded results are
returned as float('inf') and serialized as "unbounded".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist, pdist
from sklearn.metrics import calinski_harabasz_score, davies_bouldin_score, silhouette_score

from src.errors import CoincidentCenters, CoincidentCentroids, TooFewClusters, XaiGapError
from src.utils.random_utils import derive_seed


INDEX_NAMES = ("silhouette", "dbi", "chi", "dunn", "pbm", "xie_beni")
UNBOUNDED = "unbounded"


def _clean(X, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype="float64")
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels)
    keep = labels >= 0
    Xk, lk = X[keep], labels[keep]
    clusters = np.unique(lk)
    if clusters.size < 2:
        raise TooFewClusters(f"Need at least 2 non-noise clusters, got {clusters.size}")
    return Xk, lk, clusters


def _centroids(X: np.ndarray, labels: np.ndarray, clusters: np.ndarray) -> np.ndarray:
    return np.array([X[labels == c].mean(axis=0) for c in clusters])


def silhouette(X, labels, sample_size: Optional[int] = None, seed: int = 0) -> float:
    X, labels, clusters = _clean(X, labels)
    if clusters.size >= X.shape[0]:
        # every point is its own cluster: all silhouettes are 0 by convention
        return 0.0
    if sample_size is not None and X.shape[0] > sample_size:
        return float(silhouette_score(X, labels, sample_size=sample_size, random_state=seed % (2 ** 32)))
    return float(silhouette_score(X, labels))


def davies_bouldin(X, labels) -> float:
    X, labels, clusters = _clean(X, labels)
    M = cdist(_centroids(X, labels, clusters), _centroids(X, labels, clusters))
    if np.any(M[~np.eye(len(clusters), dtype=bool)] == 0):
        raise CoincidentCentroids("Two clusters share the same centroid")
    return float(davies_bouldin_score(X, labels))


def calinski_harabasz(X, labels) -> float:
    X, labels, clusters = _clean(X, labels)
    if X.shape[0] <= clusters.size:
        raise TooFewClusters(f"Calinski-Harabasz needs n > k (n={X.shape[0]}, k={clusters.size})")
    cents = _centroids(X, labels, clusters)
    wgss = sum(float(np.sum((X[labels == c] - cents[i]) ** 2)) for i, c in enumerate(clusters))
    if wgss == 0:
        return float("inf")
    return float(calinski_harabasz_score(X, labels))


def dunn(X, labels) -> float:
    X, labels, clusters = _clean(X, labels)
    groups = [X[labels == c] for c in clusters]
    diameter = max((float(pdist(g).max()) if len(g) > 1 else 0.0) for g in groups)
    separation = min(
        float(cdist(groups[i], groups[j]).min())
        for i in range(len(groups))
        for j in range(i + 1, len(groups))
    )
    if diameter == 0:
        return float("inf")
    return separation / diameter


def pbm(X, labels) -> float:
    X, labels, clusters = _clean(X, labels)
    k = clusters.size
    cents = _centroids(X, labels, clusters)
    e1 = float(np.sum(np.linalg.norm(X - X.mean(axis=0), axis=1)))
    ek = sum(float(np.sum(np.linalg.norm(X[labels == c] - cents[i], axis=1))) for i, c in enumerate(clusters))
    if ek == 0:
        return float("inf")
    dk = float(pdist(cents).max())
    return ((1.0 / k) * (e1 / ek) * dk) ** 2


def xie_beni(X, membership_or_labels, centers=None) -> float:
    """Fuzzy memberships (n x k) or crisp labels read as 0/1 memberships."""
    X = np.asarray(X, dtype="float64")
    if X.ndim == 1:
        X = X[:, None]
    u = np.asarray(membership_or_labels)
    if u.ndim == 1:
        Xk, lk, clusters = _clean(X, u)
        X = Xk
        u = (lk[:, None] == clusters[None, :]).astype("float64")
        if centers is None:
            centers = _centroids(X, lk, clusters)
    elif centers is None:
        w = u ** 2
        centers = (w.T @ X) / w.sum(axis=0)[:, None]
    centers = np.asarray(centers, dtype="float64")
    if centers.ndim == 1:
        centers = centers[:, None]
    if centers.shape[0] < 2:
        raise TooFewClusters("Xie-Beni needs at least 2 centers")
    sep = float(pdist(centers, "sqeuclidean").min())
    if sep == 0:
        raise CoincidentCenters("Two cluster centers coincide")
    compact = float(np.sum((u ** 2) * cdist(X, centers, "sqeuclidean")))
    return compact / (X.shape[0] * sep)


@dataclass(frozen=True)
class ValidityReport:
    silhouette: Optional[float] = None
    dbi: Optional[float] = None
    chi: Optional[float] = None
    dunn: Optional[float] = None
    pbm: Optional[float] = None
    xie_beni: Optional[float] = None
    k: int = 0
    n_used: int = 0
    notes: tuple[str, ...] = field(default_factory=tuple)

    def get(self, name: str) -> Optional[float]:
        return getattr(self, name)

    def to_dict(self) -> dict:
        out = {name: format_index(self.get(name)) for name in INDEX_NAMES}
        out.update({"k": self.k, "n_used": self.n_used, "notes": list(self.notes)})
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ValidityReport":
        return cls(
            **{name: parse_index(d.get(name)) for name in INDEX_NAMES},
            k=int(d.get("k", 0)),
            n_used=int(d.get("n_used", 0)),
            notes=tuple(d.get("notes") or ()),
        )


def format_index(v: Optional[float]):
    if v is None:
        return None
    if np.isinf(v):
        return UNBOUNDED
    return float(v)


def parse_index(v) -> Optional[float]:
    if v is None or v == "":
        return None
    if v == UNBOUNDED:
        return float("inf")
    return float(v)


def compute_validity(
    X,
    labels,
    membership: Optional[np.ndarray] = None,
    centers: Optional[np.ndarray] = None,
    max_rows: Optional[int] = None,
    seed: int = 0,
) -> ValidityReport:
    """All six indices; an index that cannot be computed is None with a note."""
    X = np.asarray(X, dtype="float64")
    labels = np.asarray(labels)
    if max_rows is not None and X.shape[0] > max_rows:
        rng = np.random.default_rng(derive_seed(seed, "validity-rows"))
        rows = np.sort(rng.choice(X.shape[0], size=max_rows, replace=False))
        X, labels = X[rows], labels[rows]
        if membership is not None:
            membership = membership[rows]

    keep = labels >= 0
    k = int(len(np.unique(labels[keep])))
    values, notes = {}, []
    funcs = {
        "silhouette": lambda: silhouette(X, labels),
        "dbi": lambda: davies_bouldin(X, labels),
        "chi": lambda: calinski_harabasz(X, labels),
        "dunn": lambda: dunn(X, labels),
        "pbm": lambda: pbm(X, labels),
        "xie_beni": lambda: (
            xie_beni(X[keep], membership[keep], centers) if membership is not None else xie_beni(X, labels, None)
        ),
    }
    for name, fn in funcs.items():
        try:
            values[name] = fn()
        except XaiGapError as e:
            values[name] = None
            notes.append(f"{name}: {type(e).__name__}")
            logger.debug(f"Validity index skipped: index={name} reason={e}")
    return ValidityReport(**values, k=k, n_used=int(keep.sum()), notes=tuple(notes))
