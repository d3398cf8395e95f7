"""Hyperparameter selection: elbow/knee for k, grid search for DBSCAN."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from sklearn.neighbors import NearestNeighbors

from src.clustering.dbscan import dbscan
from src.clustering.kmeans import kmeans
from src.clustering.models import Algorithm, ClusteringConfig, check_matrix
from src.errors import DegenerateInput, NoValidCell, RangeTooSmall, TooFewClusters
from src.utils.random_utils import derive_seed
from src.validity.indices import silhouette


TIE_TOL = 1e-9
MAX_NOISE_FRACTION = 0.5


@dataclass(frozen=True)
class ElbowResult:
    k: int
    ks: tuple[int, ...]
    inertias: tuple[float, ...]
    silhouettes: tuple[float, ...]
    curvature: tuple[float, ...]
    rule: str = "max second difference of inertia, ties by silhouette"

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "ks": list(self.ks),
            "inertias": list(self.inertias),
            "silhouettes": [None if np.isnan(s) else s for s in self.silhouettes],
            "curvature": [None if np.isnan(c) else c for c in self.curvature],
            "rule": self.rule,
        }


def knee_from_curve(
    ks: Sequence[int],
    inertias: Sequence[float],
    silhouettes: Sequence[float],
    prev_inertia: Optional[float] = None,
) -> tuple[int, list[float]]:
    """Pick k with the largest I(k-1) - 2 I(k) + I(k+1).

    The first k is a candidate only when `prev_inertia` (I(k_min - 1)) is
    given; the last k never is. Near-ties go to the higher silhouette, then the
    smaller k.
    """
    ks = list(ks)
    inertias = [float(v) for v in inertias]
    curvature = [float("nan")] * len(ks)
    for i in range(len(ks) - 1):
        left = inertias[i - 1] if i > 0 else prev_inertia
        if left is None:
            continue
        curvature[i] = left - 2.0 * inertias[i] + inertias[i + 1]

    valid = [i for i, c in enumerate(curvature) if not np.isnan(c)]
    if not valid:
        raise RangeTooSmall("No k in range has both neighbours on the inertia curve")
    best = max(curvature[i] for i in valid)
    tol = TIE_TOL * max(1.0, abs(best))
    tied = [i for i in valid if curvature[i] >= best - tol]

    def sil(i: int) -> float:
        s = float(silhouettes[i])
        return -np.inf if np.isnan(s) else s

    choice = min(tied, key=lambda i: (-sil(i), ks[i]))
    return ks[choice], curvature


def elbow_select_k(
    X,
    k_range: Sequence[int],
    seed: int,
    restarts: int = 10,
    max_iter: int = 300,
    silhouette_rows: Optional[int] = 2000,
) -> ElbowResult:
    ks = [int(k) for k in k_range]
    if len(ks) < 3:
        raise RangeTooSmall(f"Elbow needs at least 3 values of k, got {ks}")
    if any(b - a != 1 for a, b in zip(ks, ks[1:])) or ks[0] < 1:
        raise RangeTooSmall(f"k range must be contiguous and start at >= 1: {ks}")
    X = check_matrix(X, ks[-1])

    def run(k: int):
        cfg = ClusteringConfig(Algorithm.KMEANS, k=k, seed=derive_seed(seed, "elbow", k),
                               restarts=restarts, max_iter=max_iter)
        return kmeans(X, cfg)

    inertias, sils = [], []
    for k in ks:
        a = run(k)
        inertias.append(float(a.inertia))
        try:
            sils.append(silhouette(X, a.labels, sample_size=silhouette_rows, seed=seed))
        except TooFewClusters:
            sils.append(float("nan"))
    prev = float(run(ks[0] - 1).inertia) if ks[0] >= 2 else None

    k, curvature = knee_from_curve(ks, inertias, sils, prev_inertia=prev)
    logger.info(f"Elbow selected k={k} over {ks[0]}..{ks[-1]}")
    return ElbowResult(
        k=k,
        ks=tuple(ks),
        inertias=tuple(inertias),
        silhouettes=tuple(sils),
        curvature=tuple(curvature),
    )


@dataclass(frozen=True)
class GridCell:
    eps: float
    min_samples: int
    n_clusters: int
    noise_fraction: float
    silhouette: Optional[float]
    score: float


@dataclass(frozen=True)
class GridSearchResult:
    eps: float
    min_samples: int
    score: float
    table: tuple[GridCell, ...] = field(default_factory=tuple)
    noise_rule: str = "silhouette over non-noise rows; <2 clusters or >50% noise scores -inf"


def default_eps_grid(X, min_samples: int = 5, percentiles: Sequence[float] = (50, 75, 90, 95)) -> list[float]:
    """Candidate eps values from percentiles of the k-distance curve."""
    X = check_matrix(X)
    k = max(1, min(int(min_samples), X.shape[0]))
    dist, _ = NearestNeighbors(n_neighbors=k).fit(X).kneighbors(X)
    kdist = dist[:, -1]
    grid = sorted({float(v) for v in np.percentile(kdist, list(percentiles)) if v > 0})
    return grid or [1.0]


def grid_search_dbscan(
    X,
    eps_grid: Sequence[float],
    min_samples_grid: Sequence[int],
    silhouette_rows: Optional[int] = 2000,
    seed: int = 0,
) -> GridSearchResult:
    if not eps_grid or not min_samples_grid:
        raise DegenerateInput("DBSCAN grid search needs non-empty eps and min_samples grids")
    X = check_matrix(X)
    n = X.shape[0]
    cells = []
    for eps in eps_grid:
        for ms in min_samples_grid:
            a = dbscan(X, ClusteringConfig(Algorithm.DBSCAN, eps=float(eps), min_samples=int(ms)))
            noise = a.n_noise / n
            sil = None
            score = -np.inf
            if a.k >= 2 and noise <= MAX_NOISE_FRACTION:
                sil = silhouette(X, a.labels, sample_size=silhouette_rows, seed=seed)
                score = sil
            cells.append(GridCell(float(eps), int(ms), a.k, float(noise), sil, float(score)))

    best = None
    for c in cells:
        if c.score > -np.inf and (best is None or c.score > best.score):
            best = c
    if best is None:
        raise NoValidCell(f"No DBSCAN cell gave >= 2 clusters with <= 50% noise ({len(cells)} cells)")
    logger.info(f"DBSCAN grid search: eps={best.eps:.4g} min_samples={best.min_samples} silhouette={best.score:.4f}")
    return GridSearchResult(eps=best.eps, min_samples=best.min_samples, score=best.score, table=tuple(cells))
