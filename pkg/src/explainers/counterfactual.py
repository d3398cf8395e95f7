"""Counterfactual search.

Minimizes lambda * (p_target(x') - 1)^2 + mean_i |x'_i - x_i| / range_i, growing
lambda geometrically until the predicted class flips. Uses analytic gradients
when the black box provides `gradient(x, class_index)`, otherwise a
coordinate-wise line search. A final pass reverts changed features, smallest
change first, whenever the class stays flipped without them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from loguru import logger

from src.errors import NoCounterfactualFound, ShapeMismatch, TargetIsCurrentClass
from src.explainers.types import Counterfactual
from src.utils.random_utils import rng_for


CHANGE_TOL = 1e-12


@dataclass(frozen=True)
class CounterfactualConfig:
    lambda_init: float = 0.1
    lambda_growth: float = 2.0
    max_outer: int = 16
    step: float = 0.05
    inner_iters: int = 200
    seed: int = 0

    @classmethod
    def from_dict(cls, d) -> "CounterfactualConfig":
        d = d or {}
        return cls(**{k: type(getattr(cls, k))(v) for k, v in d.items() if k in cls.__dataclass_fields__})


def _safe_ranges(ranges, names: Sequence[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    r = np.asarray(ranges, dtype="float64")
    zero = tuple(n for n, v in zip(names, r) if not v > 0)
    return np.where(r > 0, r, 1.0), zero


def cf_proximity(x, x_cf, ranges, feature_names: Optional[Sequence[str]] = None) -> float:
    """(1/d) * sum |x_i - x'_i| / range_i; zero ranges fall back to the raw difference."""
    x, x_cf = np.asarray(x, dtype="float64"), np.asarray(x_cf, dtype="float64")
    if x.shape != x_cf.shape or x.shape != np.shape(ranges):
        raise ShapeMismatch("Instance, counterfactual and ranges must share one dimension")
    names = feature_names or [f"x{i}" for i in range(x.shape[0])]
    r, zero = _safe_ranges(ranges, names)
    delta = np.abs(x - x_cf)
    changed_zero = [n for n, d, raw in zip(names, delta, np.asarray(ranges)) if not raw > 0 and d > CHANGE_TOL]
    if changed_zero:
        logger.warning(f"Zero-range features changed, proximity uses raw difference: {changed_zero}")
    return float(np.mean(delta / r)) if x.size else 0.0


def cf_sparsity(x, x_cf) -> int:
    x, x_cf = np.asarray(x, dtype="float64"), np.asarray(x_cf, dtype="float64")
    if x.shape != x_cf.shape:
        raise ShapeMismatch("Instance and counterfactual differ in dimension")
    return int(np.sum(np.abs(x - x_cf) > CHANGE_TOL))


def _predicted(predict_fn: Callable, x: np.ndarray) -> int:
    return int(np.argmax(np.asarray(predict_fn(x[None, :]))[0]))


def _loss(predict_fn, x, u, r, target, lam) -> float:
    p = float(np.asarray(predict_fn((x + r * u)[None, :]))[0, target])
    return lam * (p - 1.0) ** 2 + float(np.mean(np.abs(u)))


def _descend_gradient(predict_fn, x, u, r, target, lam, cfg) -> tuple[np.ndarray, int]:
    d = x.shape[0]
    steps = 0
    for _ in range(cfg.inner_iters):
        xc = x + r * u
        p = float(np.asarray(predict_fn(xc[None, :]))[0, target])
        grad = 2.0 * lam * (p - 1.0) * r * predict_fn.gradient(xc, target) + np.sign(u) / d
        u = u - cfg.step * grad
        steps += 1
        if _predicted(predict_fn, x + r * u) == target:
            break
    return u, steps


def _descend_coordinates(predict_fn, x, u, r, target, lam, cfg, order) -> tuple[np.ndarray, int]:
    scales = cfg.step * 2.0 ** np.arange(0, 8)
    steps = 0
    current = _loss(predict_fn, x, u, r, target, lam)
    for _ in range(max(1, cfg.inner_iters // max(1, x.shape[0]))):
        improved = False
        for j in order:
            best_delta, best_loss = 0.0, current
            for s in scales:
                for delta in (s, -s):
                    trial = u.copy()
                    trial[j] += delta
                    val = _loss(predict_fn, x, trial, r, target, lam)
                    if val < best_loss - 1e-15:
                        best_delta, best_loss = delta, val
            if best_delta:
                u = u.copy()
                u[j] += best_delta
                current = best_loss
                improved = True
            steps += 1
        if not improved or _predicted(predict_fn, x + r * u) == target:
            break
    return u, steps


def counterfactual_search(
    predict_fn: Callable,
    x,
    target_class: int,
    ranges,
    cfg: CounterfactualConfig = CounterfactualConfig(),
    feature_names: Optional[Sequence[str]] = None,
) -> Counterfactual:
    x = np.asarray(x, dtype="float64").ravel()
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(x.shape[0])]
    if len(np.atleast_1d(ranges)) != x.shape[0]:
        raise ShapeMismatch("ranges must have one entry per feature")
    current = _predicted(predict_fn, x)
    if current == int(target_class):
        raise TargetIsCurrentClass(f"Instance is already predicted as class {target_class}")

    r, zero = _safe_ranges(ranges, names)
    if zero:
        logger.warning(f"Zero-range features use unscaled distance: {list(zero)}")
    use_gradient = callable(getattr(predict_fn, "gradient", None))
    order = rng_for(cfg.seed, "counterfactual").permutation(x.shape[0])

    u = np.zeros_like(x)
    lam = cfg.lambda_init
    trace = 0
    flipped = False
    for _ in range(cfg.max_outer):
        if use_gradient:
            u, steps = _descend_gradient(predict_fn, x, u, r, target_class, lam, cfg)
        else:
            u, steps = _descend_coordinates(predict_fn, x, u, r, target_class, lam, cfg, order)
        trace += steps
        if _predicted(predict_fn, x + r * u) == target_class:
            flipped = True
            break
        lam *= cfg.lambda_growth

    if not flipped:
        raise NoCounterfactualFound(
            f"Class did not flip to {target_class} after {cfg.max_outer} lambda escalations (lambda={lam:.3g})"
        )

    x_cf = x + r * u
    # sparsity pass: smallest relative changes are tried first
    for j in np.argsort(np.abs(u), kind="stable"):
        if abs(x_cf[j] - x[j]) <= CHANGE_TOL:
            x_cf[j] = x[j]
            continue
        trial = x_cf.copy()
        trial[j] = x[j]
        if _predicted(predict_fn, trial) == target_class:
            x_cf = trial

    result = Counterfactual(
        original=x,
        counterfactual=x_cf,
        target_class=int(target_class),
        proximity=cf_proximity(x, x_cf, ranges, names),
        sparsity=cf_sparsity(x, x_cf),
        trace_length=trace,
        final_lambda=lam,
        zero_range_features=zero,
    )
    logger.debug(f"Counterfactual: target={target_class} sparsity={result.sparsity} proximity={result.proximity:.4f}")
    return result
