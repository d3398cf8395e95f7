"""k-means with k-means++ seeding and seeded restarts."""

from __future__ import annotations

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist

from src.clustering.models import Assignment, ClusteringConfig, check_matrix, relabel_by_first_appearance
from src.utils.random_utils import rng_for


def kmeans_plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    first = int(rng.integers(n))
    centers = [X[first]]
    d2 = np.sum((X - X[first]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        idx = int(rng.integers(n)) if total <= 0 else int(rng.choice(n, p=d2 / total))
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int, tol: float):
    """Returns (labels, centers, inertia, inertia history). Empty clusters keep their center."""
    history: list[float] = []
    centers = centers.copy()
    rows = np.arange(X.shape[0])
    for _ in range(max_iter):
        d = cdist(X, centers, "sqeuclidean")
        labels = np.argmin(d, axis=1)
        history.append(float(d[rows, labels].sum()))
        new = centers.copy()
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                new[j] = X[members].mean(axis=0)
        shift = float(np.sum((new - centers) ** 2))
        centers = new
        if shift <= tol:
            break
    d = cdist(X, centers, "sqeuclidean")
    labels = np.argmin(d, axis=1)
    inertia = float(d[rows, labels].sum())
    history.append(inertia)
    return labels, centers, inertia, history


def kmeans(X, cfg: ClusteringConfig) -> Assignment:
    X = check_matrix(X, cfg.k)
    k = int(cfg.k)
    best = None
    for r in range(cfg.restarts):
        rng = rng_for(cfg.seed, "kmeans", r)
        labels, centers, inertia, history = lloyd(X, kmeans_plus_plus(X, k, rng), cfg.max_iter, cfg.tol)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, history, r)

    labels, centers, inertia, history, restart = best
    labels, order = relabel_by_first_appearance(labels)
    logger.debug(f"kmeans: k={k} inertia={inertia:.6g} restart={restart} iters={len(history) - 1}")
    return Assignment(
        labels=labels,
        centroids=centers[order],
        inertia=inertia,
        meta={"inertia_history": history, "restart": restart},
    )
