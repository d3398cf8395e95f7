"""Anchors: rule-based local explanations found by beam search.

Each candidate predicate fixes one feature to the quartile bin holding the
instance's value. Precision is estimated by Monte Carlo: rows are drawn from
the training data and every anchored feature is resampled from training
values in the same bin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from loguru import logger

from src.errors import EmptyData
from src.explainers.types import AnchorRule, Predicate
from src.utils.random_utils import rng_for


@dataclass(frozen=True)
class AnchorsConfig:
    precision_threshold: float = 0.95
    n_mc: int = 10000
    beam: int = 4
    seed: int = 0

    @classmethod
    def from_dict(cls, d) -> "AnchorsConfig":
        d = d or {}
        return cls(
            precision_threshold=float(d.get("precision_threshold", 0.95)),
            n_mc=int(d.get("n_mc", 10000)),
            beam=int(d.get("beam", 4)),
            seed=int(d.get("seed", 0)),
        )


class AnchorSampler:
    """Quartile bins and the in-bin perturbation distribution of a training matrix."""

    def __init__(self, train, feature_names: Sequence[str]):
        self.train = np.asarray(train, dtype="float64")
        if self.train.shape[0] == 0:
            raise EmptyData("Anchors need at least one training row")
        self.feature_names = tuple(feature_names)
        self.edges = np.percentile(self.train, [25, 50, 75], axis=0).T  # d x 3
        self._bins = np.column_stack([self.bin_of(j, self.train[:, j]) for j in range(self.train.shape[1])])

    def bin_of(self, j: int, values) -> np.ndarray:
        return np.searchsorted(self.edges[j], values, side="left")

    def predicate(self, j: int, value: float) -> Predicate:
        b = int(self.bin_of(j, value))
        bounds = np.concatenate([[-np.inf], self.edges[j], [np.inf]])
        return Predicate(feature=self.feature_names[j], index=j, bin=b, lower=float(bounds[b]), upper=float(bounds[b + 1]))

    def sample(self, predicates: Sequence[Predicate], n: int, rng: np.random.Generator) -> np.ndarray:
        rows = self.train[rng.integers(self.train.shape[0], size=n)].copy()
        for p in predicates:
            pool = self.train[self._bins[:, p.index] == p.bin, p.index]
            if pool.size == 0:
                pool = np.array([p.lower if np.isinf(p.upper) else p.upper])
            rows[:, p.index] = rng.choice(pool, size=n)
        return rows


def _predicted(predict_fn: Callable, X) -> np.ndarray:
    return np.argmax(np.asarray(predict_fn(X)), axis=1)


def anchor_coverage(rule: AnchorRule, data) -> float:
    data = np.atleast_2d(np.asarray(data, dtype="float64"))
    if data.shape[0] == 0:
        raise EmptyData("Coverage needs at least one data row")
    return float(np.mean(rule.satisfied(data)))


def anchor_precision(
    rule: AnchorRule | Sequence[Predicate],
    predict_fn: Callable,
    x_class: int,
    n_mc: int,
    seed: int,
    sampler: AnchorSampler,
) -> float:
    predicates = rule.predicates if isinstance(rule, AnchorRule) else tuple(rule)
    key = ",".join(str(p.index) for p in sorted(predicates, key=lambda p: p.index))
    rng = rng_for(seed, "anchors", key)
    samples = sampler.sample(predicates, n_mc, rng)
    return float(np.mean(_predicted(predict_fn, samples) == x_class))


def anchors_explain(predict_fn: Callable, x, sampler: AnchorSampler, cfg: AnchorsConfig = AnchorsConfig()) -> AnchorRule:
    x = np.asarray(x, dtype="float64").ravel()
    d = x.shape[0]
    x_class = int(_predicted(predict_fn, x[None, :])[0])
    candidates = {j: sampler.predicate(j, x[j]) for j in range(d)}

    def score(features: tuple[int, ...]):
        preds = tuple(candidates[j] for j in features)
        prec = anchor_precision(preds, predict_fn, x_class, cfg.n_mc, cfg.seed, sampler)
        draft = AnchorRule(preds, prec, 1.0, cfg.n_mc, cfg.precision_threshold, x_class)
        return prec, anchor_coverage(draft, sampler.train), preds

    def build(prec, cov, preds, met=True) -> AnchorRule:
        return AnchorRule(
            predicates=preds,
            precision=prec,
            coverage=cov,
            n_samples=cfg.n_mc,
            threshold=cfg.precision_threshold,
            target_class=x_class,
            meets_threshold=met,
        )

    prec, cov, preds = score(())
    if prec >= cfg.precision_threshold:
        return build(prec, cov, preds)

    beam: list[tuple[int, ...]] = [()]
    best_seen = None
    for _ in range(d):
        expanded = sorted({tuple(sorted(f + (j,))) for f in beam for j in range(d) if j not in f})
        scored = [(f, *score(f)) for f in expanded]
        passing = [s for s in scored if s[1] >= cfg.precision_threshold]
        if passing:
            f, prec, cov, preds = max(passing, key=lambda s: (s[2], s[1], tuple(-j for j in s[0])))
            logger.debug(f"Anchor found: features={len(f)} precision={prec:.3f} coverage={cov:.3f}")
            return build(prec, cov, preds)
        scored.sort(key=lambda s: (-s[1], -s[2], s[0]))
        best_seen = scored[0]
        beam = [s[0] for s in scored[: cfg.beam]]

    f, prec, cov, preds = best_seen
    logger.warning(f"No anchor reached precision {cfg.precision_threshold}: best={prec:.3f} features={len(f)}")
    return build(prec, cov, preds, met=False)
