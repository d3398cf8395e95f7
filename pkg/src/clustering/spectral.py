"""Normalized spectral clustering on an RBF affinity graph."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist, pdist, squareform

from src.clustering.kmeans import kmeans
from src.clustering.linalg import jacobi_eigh
from src.clustering.models import Algorithm, Assignment, ClusteringConfig, check_matrix, relabel_by_first_appearance
from src.utils.random_utils import rng_for


ISOLATED_DEGREE = 1e-12


def rbf_affinity(X: np.ndarray) -> tuple[np.ndarray, float]:
    """W_ij = exp(-d_ij^2 / (2 sigma^2)) with sigma = median pairwise distance; zero diagonal."""
    dists = pdist(X)
    sigma = float(np.median(dists)) if dists.size else 1.0
    if sigma <= 0:
        sigma = 1.0
    W = squareform(np.exp(-(dists ** 2) / (2.0 * sigma ** 2)))
    return W, sigma


def normalized_laplacian(W: np.ndarray) -> np.ndarray:
    deg = W.sum(axis=1)
    deg = np.where(deg > 0, deg, ISOLATED_DEGREE)
    inv_sqrt = 1.0 / np.sqrt(deg)
    L = np.eye(W.shape[0]) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    return (L + L.T) / 2.0


def spectral(X, cfg: ClusteringConfig) -> Assignment:
    X = check_matrix(X, cfg.k)
    n, k = X.shape[0], int(cfg.k)
    if k == 1:
        return Assignment(labels=np.zeros(n, dtype=int), meta={"bandwidth": None})

    rows = np.arange(n)
    if n > cfg.max_rows:
        rng = rng_for(cfg.seed, "spectral-subsample")
        rows = np.sort(rng.choice(n, size=cfg.max_rows, replace=False))
        logger.warning(f"Spectral clustering subsampled: rows={n} used={cfg.max_rows}")
    sub = X[rows]

    W, sigma = rbf_affinity(sub)
    _, vectors = jacobi_eigh(normalized_laplacian(W))
    embedding = vectors[:, :k]
    norms = np.linalg.norm(embedding, axis=1, keepdims=True)
    embedding = embedding / np.where(norms > 0, norms, 1.0)

    inner = kmeans(embedding, replace(cfg, algorithm=Algorithm.KMEANS))
    sub_labels = inner.labels
    if len(rows) == n:
        labels = sub_labels
    else:
        means = np.array([sub[sub_labels == j].mean(axis=0) for j in range(inner.k)])
        labels = np.argmin(cdist(X, means), axis=1)
        labels[rows] = sub_labels
        labels, _ = relabel_by_first_appearance(labels)

    return Assignment(labels=labels, meta={"bandwidth": sigma, "rows_used": int(len(rows))})
