"""DBSCAN with inclusive radius, self-counting cores and row-order label ids."""

from __future__ import annotations

from collections import deque

import numpy as np
from loguru import logger
from sklearn.neighbors import NearestNeighbors

from src.clustering.models import Assignment, ClusteringConfig, check_matrix


def region_queries(X: np.ndarray, eps: float) -> list[np.ndarray]:
    """Neighbour indices within `eps` (inclusive, self included), nearest first."""
    nn = NearestNeighbors(radius=eps, algorithm="ball_tree").fit(X)
    # sklearn only sorts when distances are returned
    _, indices = nn.radius_neighbors(X, return_distance=True, sort_results=True)
    return list(indices)


def dbscan(X, cfg: ClusteringConfig) -> Assignment:
    X = check_matrix(X)
    neighbors = region_queries(X, float(cfg.eps))
    core = np.array([len(nb) >= cfg.min_samples for nb in neighbors])

    labels = np.full(X.shape[0], -1, dtype=int)
    cluster = 0
    for i in range(X.shape[0]):
        if labels[i] >= 0 or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in neighbors[p]:
                if labels[q] < 0:
                    labels[q] = cluster
                    queue.append(q)
        cluster += 1

    noise = int(np.sum(labels < 0))
    logger.debug(f"dbscan: eps={cfg.eps} min_samples={cfg.min_samples} clusters={cluster} noise={noise}")
    return Assignment(labels=labels, meta={"core": core, "n_noise": noise})
