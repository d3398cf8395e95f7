"""Clustering configuration and result types."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Mapping, Optional

import numpy as np

from src.errors import ConfigError, DegenerateInput


class Algorithm(str, Enum):
    KMEANS = "kmeans"
    FUZZY_CMEANS = "fuzzy_cmeans"
    DBSCAN = "dbscan"
    SPECTRAL = "spectral"


PARAMETRIC = (Algorithm.KMEANS, Algorithm.FUZZY_CMEANS, Algorithm.SPECTRAL)

# Names kept in the benchmark grid so reports keep their full shape.
RESERVED_ALGORITHMS = ("hdbscan", "robust_border_peeling")


@dataclass(frozen=True)
class ClusteringConfig:
    algorithm: Algorithm
    k: Optional[int] = None
    eps: Optional[float] = None
    min_samples: Optional[int] = None
    m: float = 2.0
    seed: int = 0
    restarts: int = 10
    max_iter: int = 300
    tol: float = 1e-6
    max_rows: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.algorithm in PARAMETRIC:
            if self.k is None or int(self.k) < 1:
                raise ConfigError(f"{self.algorithm.value} needs k >= 1, got {self.k}")
        if self.algorithm == Algorithm.DBSCAN:
            if self.eps is None or not self.eps > 0:
                raise ConfigError(f"dbscan needs eps > 0, got {self.eps}")
            if self.min_samples is None or int(self.min_samples) < 1:
                raise ConfigError(f"dbscan needs min_samples >= 1, got {self.min_samples}")
        if self.algorithm == Algorithm.FUZZY_CMEANS and not self.m > 1:
            raise ConfigError(f"fuzzifier m must be > 1, got {self.m}")
        if self.restarts < 1 or self.max_iter < 1:
            raise ConfigError("restarts and max_iter must be >= 1")

    def with_seed(self, seed: int) -> "ClusteringConfig":
        return replace(self, seed=int(seed))

    def params(self) -> dict:
        """Only the hyperparameters that matter for the algorithm."""
        if self.algorithm == Algorithm.DBSCAN:
            return {"eps": float(self.eps), "min_samples": int(self.min_samples)}
        out = {"k": int(self.k)}
        if self.algorithm == Algorithm.FUZZY_CMEANS:
            out["m"] = float(self.m)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithm"] = self.algorithm.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClusteringConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True, eq=False)
class Assignment:
    labels: np.ndarray
    centroids: Optional[np.ndarray] = None
    inertia: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(len(np.unique(self.labels[self.labels >= 0])))

    @property
    def n_noise(self) -> int:
        return int(np.sum(self.labels < 0))


@dataclass(frozen=True, eq=False)
class FuzzyAssignment:
    membership: np.ndarray
    centers: np.ndarray
    objective_history: tuple[float, ...] = ()

    def hard_labels(self) -> np.ndarray:
        return relabel_by_first_appearance(np.argmax(self.membership, axis=1))[0]

    def to_assignment(self) -> Assignment:
        raw = np.argmax(self.membership, axis=1)
        labels, order = relabel_by_first_appearance(raw)
        return Assignment(
            labels=labels,
            centroids=self.centers[order],
            meta={"membership": self.membership[:, order], "objective_history": list(self.objective_history)},
        )


def relabel_by_first_appearance(labels: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Renumber non-noise labels 0..k-1 in order of first appearance.

    Returns (new labels, old ids in new order).
    """
    labels = np.asarray(labels)
    order: list[int] = []
    seen: dict[int, int] = {}
    out = np.full(labels.shape, -1, dtype=int)
    for i, lab in enumerate(labels.tolist()):
        if lab < 0:
            continue
        if lab not in seen:
            seen[lab] = len(order)
            order.append(lab)
        out[i] = seen[lab]
    return out, order


def check_matrix(X: np.ndarray, k: Optional[int] = None) -> np.ndarray:
    X = np.asarray(X, dtype="float64")
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise DegenerateInput(f"Expected a non-empty 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DegenerateInput("Input contains NaN or infinite values")
    if k is not None and X.shape[0] < k:
        raise DegenerateInput(f"Fewer rows ({X.shape[0]}) than clusters ({k})")
    return X
