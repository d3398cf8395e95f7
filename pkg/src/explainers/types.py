"""Explanation value objects shared by the explainers, the thesaurus and the quality metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from src.errors import UnknownFeature


@dataclass(frozen=True)
class FeatureImportanceVector:
    items: tuple[tuple[str, float], ...]
    method: str
    instance_id: str = ""
    intercept: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        items = tuple((str(n), float(w)) for n, w in self.items)
        names = [n for n, _ in items]
        if len(set(names)) != len(names):
            raise UnknownFeature(f"Duplicate feature names in importance vector: {names}")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_arrays(cls, names: Sequence[str], weights, method: str, **kwargs) -> "FeatureImportanceVector":
        return cls(items=tuple(zip(names, np.asarray(weights, dtype="float64").tolist())), method=method, **kwargs)

    @property
    def feature_names(self) -> list[str]:
        return [n for n, _ in self.items]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.items], dtype="float64")

    def weight_of(self, name: str) -> float:
        for n, w in self.items:
            if n == name:
                return w
        raise UnknownFeature(f"Feature not in importance vector: {name!r}")

    def ranked(self) -> list[tuple[str, float]]:
        """Items by |weight| descending; equal magnitudes keep their original order."""
        return sorted(self.items, key=lambda it: -abs(it[1]))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "instance_id": self.instance_id,
            "intercept": self.intercept,
            "items": [[n, w] for n, w in self.items],
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureImportanceVector":
        return cls(
            items=tuple((n, w) for n, w in d["items"]),
            method=d["method"],
            instance_id=d.get("instance_id", ""),
            intercept=float(d.get("intercept", 0.0)),
            meta=dict(d.get("meta") or {}),
        )


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    kernel_width: Optional[float] = None  # default 0.75 * sqrt(d)
    ridge_l2: float = 1.0
    seed: int = 0

    def width_for(self, d: int) -> float:
        return float(self.kernel_width) if self.kernel_width else 0.75 * float(np.sqrt(d))

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "kernel_width": self.kernel_width,
            "ridge_l2": self.ridge_l2,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "LimeConfig":
        d = d or {}
        kw = d.get("kernel_width")
        return cls(
            n_samples=int(d.get("n_samples", 5000)),
            kernel_width=float(kw) if kw is not None else None,
            ridge_l2=float(d.get("ridge_l2", 1.0)),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class Predicate:
    feature: str
    index: int
    bin: int
    lower: float  # exclusive; -inf for the first bin
    upper: float  # inclusive; +inf for the last bin

    @property
    def relation(self) -> str:
        if np.isinf(self.lower):
            return "<="
        if np.isinf(self.upper):
            return ">"
        return "in"

    def holds(self, column: np.ndarray) -> np.ndarray:
        return (column > self.lower) & (column <= self.upper)

    def describe(self) -> str:
        if self.relation == "<=":
            return f"{self.feature} <= {self.upper:.4g}"
        if self.relation == ">":
            return f"{self.feature} > {self.lower:.4g}"
        return f"{self.lower:.4g} < {self.feature} <= {self.upper:.4g}"


@dataclass(frozen=True)
class AnchorRule:
    predicates: tuple[Predicate, ...]
    precision: float
    coverage: float
    n_samples: int
    threshold: float
    target_class: int
    meets_threshold: bool = True

    def satisfied(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        mask = np.ones(X.shape[0], dtype=bool)
        for p in self.predicates:
            mask &= p.holds(X[:, p.index])
        return mask

    def describe(self) -> str:
        return " AND ".join(p.describe() for p in self.predicates) or "(always)"


@dataclass(frozen=True, eq=False)
class Counterfactual:
    original: np.ndarray
    counterfactual: np.ndarray
    target_class: int
    proximity: float
    sparsity: int
    trace_length: int
    final_lambda: float = 0.0
    zero_range_features: tuple[str, ...] = ()

    def changed_features(self, names: Sequence[str]) -> list[str]:
        diff = np.abs(self.counterfactual - self.original) > 1e-12
        return [n for n, d in zip(names, diff) if d]
