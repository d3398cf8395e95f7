"""Content quality: agreement between the ground-truth importances and the LLM ranking."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from loguru import logger
from scipy.stats import rankdata, spearmanr
from sklearn.metrics import ndcg_score

from src.errors import DimensionMismatch, TooFewCommonFeatures, ZeroGainVector
from src.explainers.types import FeatureImportanceVector


def _llm_pairs(llm) -> list[tuple[str, str]]:
    """Accept a ParsedExplanation, (name, sign) pairs or bare names."""
    items = getattr(llm, "technical_ranking", llm)
    return [(it, "+") if isinstance(it, str) else (it[0], it[1]) for it in items]


def align_llm_order(ground: FeatureImportanceVector, llm) -> tuple[list[str], list[str]]:
    """LLM order over the ground feature universe; unmentioned features appended alphabetically.

    Returns (full order, appended features).
    """
    universe = set(ground.feature_names)
    order = [name for name, _ in _llm_pairs(llm) if name in universe]
    missing = sorted(universe - set(order))
    if missing:
        logger.warning(f"LLM ranking misses features, appended alphabetically: {missing}")
    return order + missing, missing


def spearman_rank(ground: FeatureImportanceVector, llm) -> float:
    """Spearman rho between |weight| ranks and LLM ranks; unmentioned features share the last midrank."""
    names = ground.feature_names
    mentioned = [name for name, _ in _llm_pairs(llm) if name in set(names)]
    mentioned = list(dict.fromkeys(mentioned))
    if len(mentioned) < 2:
        raise TooFewCommonFeatures(f"Need at least 2 features in common, got {len(mentioned)}")

    position = {name: i + 1 for i, name in enumerate(mentioned)}
    tail = len(mentioned) + 1
    llm_scores = np.array([position.get(n, tail) for n in names], dtype="float64")
    ground_ranks = rankdata(-np.abs(ground.weights), method="average")
    llm_ranks = rankdata(llm_scores, method="average")
    if np.ptp(ground_ranks) == 0 or np.ptp(llm_ranks) == 0:
        logger.warning("Spearman undefined for a constant ranking; scoring 0.0")
        return 0.0
    n = len(names)
    if len(np.unique(ground_ranks)) == n and len(np.unique(llm_ranks)) == n:
        # no ties: closed form, exact for identical and reversed rankings
        rho = 1.0 - 6.0 * math.fsum((ground_ranks - llm_ranks) ** 2) / (n * (n * n - 1))
    else:
        rho = spearmanr(ground_ranks, llm_ranks).correlation
    return float(np.clip(rho, -1.0, 1.0))


def ndcg_difference(ground: FeatureImportanceVector, llm) -> float:
    """1 - NDCG of the LLM ordering with gains |w| / sum |w|."""
    gains = np.abs(ground.weights)
    if gains.size and gains.sum() <= 0:
        raise ZeroGainVector("All ground-truth importances are zero")
    if gains.size <= 1:
        return 0.0
    gains = gains / gains.sum()
    order, _ = align_llm_order(ground, llm)
    n = len(order)
    score_of = {name: float(n - i) for i, name in enumerate(order)}
    scores = np.array([score_of[name] for name in ground.feature_names])
    ndcg = ndcg_score(gains[None, :], scores[None, :], ignore_ties=True)
    return float(np.clip(1.0 - ndcg, 0.0, 1.0))


def reciprocal_rank_vector(ranking: Sequence[tuple[str, str]], names: Sequence[str]) -> np.ndarray:
    """sign / rank per feature in `names` order; features missing from the ranking get 0."""
    value = {}
    for i, (name, sign) in enumerate(ranking):
        value.setdefault(name, (1.0 if sign == "+" else -1.0) / (i + 1))
    return np.array([value.get(n, 0.0) for n in names], dtype="float64")


def content_vectors(ground: FeatureImportanceVector, llm) -> tuple[np.ndarray, np.ndarray]:
    names = ground.feature_names
    ground_ranking = [(name, "+" if w >= 0 else "-") for name, w in ground.ranked()]
    universe = set(names)
    llm_ranking = [(n, s) for n, s in _llm_pairs(llm) if n in universe]
    return reciprocal_rank_vector(ground_ranking, names), reciprocal_rank_vector(llm_ranking, names)


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def euclidean_distance(v1, v2) -> float:
    """L2 distance between the L2-normalized vectors."""
    a, b = np.asarray(v1, dtype="float64").ravel(), np.asarray(v2, dtype="float64").ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"Vectors differ in dimension: {a.shape[0]} vs {b.shape[0]}")
    return float(np.linalg.norm(_unit(a) - _unit(b)))
