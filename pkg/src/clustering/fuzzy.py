"""Fuzzy c-means (alternating membership / center updates)."""

from __future__ import annotations

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist

from src.clustering.kmeans import kmeans_plus_plus
from src.clustering.models import ClusteringConfig, FuzzyAssignment, check_matrix
from src.utils.random_utils import rng_for


def memberships(X: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    """u_ij = 1 / sum_l (d_ij / d_il)^(2/(m-1)); a point on a center belongs to it fully."""
    d = cdist(X, centers)
    u = np.zeros_like(d)
    on_center = d == 0
    hit = on_center.any(axis=1)
    if hit.any():
        u[hit] = on_center[hit] / on_center[hit].sum(axis=1, keepdims=True)
    rest = ~hit
    if rest.any():
        dr = d[rest]
        ratio = (dr.min(axis=1, keepdims=True) / dr) ** (2.0 / (m - 1.0))
        u[rest] = ratio / ratio.sum(axis=1, keepdims=True)
    return u


def objective(X: np.ndarray, u: np.ndarray, centers: np.ndarray, m: float) -> float:
    return float(np.sum((u ** m) * cdist(X, centers, "sqeuclidean")))


def fuzzy_cmeans(X, cfg: ClusteringConfig) -> FuzzyAssignment:
    X = check_matrix(X, cfg.k)
    m = float(cfg.m)
    centers = kmeans_plus_plus(X, int(cfg.k), rng_for(cfg.seed, "fuzzy"))
    u = memberships(X, centers, m)
    history = [objective(X, u, centers, m)]
    for _ in range(cfg.max_iter):
        w = u ** m
        centers = (w.T @ X) / np.maximum(w.sum(axis=0), 1e-300)[:, None]
        u = memberships(X, centers, m)
        history.append(objective(X, u, centers, m))
        if history[-2] - history[-1] < cfg.tol:
            break
    logger.debug(f"fuzzy_cmeans: k={cfg.k} m={m} objective={history[-1]:.6g} iters={len(history) - 1}")
    return FuzzyAssignment(membership=u, centers=centers, objective_history=tuple(history))
