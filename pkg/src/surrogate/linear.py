"""Multinomial logistic regression used as the classification surrogate of a clustering.

Trained by full-batch gradient descent so a given seed always gives the same
weights. A step that would raise the loss is halved until it does not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from scipy.special import log_softmax, softmax
from sklearn.metrics import accuracy_score, f1_score

from src.errors import RowMismatch, ShapeMismatch, SingleClass
from src.utils.random_utils import rng_for


MIN_STEP = 1e-12


@dataclass(frozen=True)
class SurrogateConfig:
    l2: float = 1e-4
    lr: float = 0.1
    epochs: int = 2000
    tol: float = 1e-9
    seed: int = 0

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "SurrogateConfig":
        d = d or {}
        return cls(**{k: type(getattr(cls, k))(v) for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True, eq=False)
class LinearSurrogate:
    weights: np.ndarray
    bias: np.ndarray
    classes: tuple[int, ...]
    feature_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return int(self.weights.shape[1])

    def class_index(self, cls: int) -> int:
        return self.classes.index(int(cls))

    def to_dict(self) -> dict:
        return {
            "model": "multinomial_logistic_regression",
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "classes": list(self.classes),
            "feature_names": list(self.feature_names),
            "meta": {k: v for k, v in self.meta.items() if k != "loss_history"},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSurrogate":
        return cls(
            weights=np.asarray(d["weights"], dtype="float64"),
            bias=np.asarray(d["bias"], dtype="float64"),
            classes=tuple(int(c) for c in d["classes"]),
            feature_names=tuple(d.get("feature_names") or ()),
            meta=dict(d.get("meta") or {}),
        )


def loss_and_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray, l2: float):
    """Mean cross-entropy + (l2/2)||W||^2 and its gradients (dW, db)."""
    logits = X @ W.T + b
    logp = log_softmax(logits, axis=1)
    n = X.shape[0]
    loss = -float(np.sum(Y * logp)) / n + 0.5 * l2 * float(np.sum(W * W))
    diff = np.exp(logp) - Y
    return loss, diff.T @ X / n + l2 * W, diff.mean(axis=0)


def train_linear(X, labels, cfg: SurrogateConfig = SurrogateConfig(), feature_names: Sequence[str] = ()) -> LinearSurrogate:
    X = np.asarray(X, dtype="float64")
    labels = np.asarray(labels)
    if labels.shape[0] != X.shape[0]:
        raise RowMismatch(f"{labels.shape[0]} labels for {X.shape[0]} rows")
    keep = labels >= 0
    X, labels = X[keep], labels[keep]
    classes = tuple(int(c) for c in np.unique(labels))
    if len(classes) < 2:
        raise SingleClass(f"Surrogate needs at least 2 classes, got {classes}")

    Y = (labels[:, None] == np.array(classes)[None, :]).astype("float64")
    rng = rng_for(cfg.seed, "surrogate-init")
    W = rng.normal(0.0, 0.01, size=(len(classes), X.shape[1]))
    b = np.zeros(len(classes))

    loss, gW, gb = loss_and_grad(W, b, X, Y, cfg.l2)
    history = [loss]
    epochs = 0
    for epochs in range(1, cfg.epochs + 1):
        step = cfg.lr
        while True:
            W_new, b_new = W - step * gW, b - step * gb
            new_loss, new_gW, new_gb = loss_and_grad(W_new, b_new, X, Y, cfg.l2)
            if new_loss <= loss or step < MIN_STEP:
                break
            step /= 2.0
        if new_loss > loss:
            break
        improvement = loss - new_loss
        W, b, loss, gW, gb = W_new, b_new, new_loss, new_gW, new_gb
        history.append(loss)
        if improvement < cfg.tol:
            break

    logger.info(f"Surrogate trained: classes={len(classes)} epochs={epochs} loss={loss:.6g}")
    return LinearSurrogate(
        weights=W,
        bias=b,
        classes=classes,
        feature_names=tuple(feature_names),
        meta={
            "epochs": epochs,
            "final_loss": loss,
            "seed": cfg.seed,
            "l2": cfg.l2,
            "lr": cfg.lr,
            "loss_history": history,
        },
    )


def predict_proba(model: LinearSurrogate, X) -> np.ndarray:
    X = np.asarray(X, dtype="float64")
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ShapeMismatch(f"Model expects {model.n_features} features, got {X.shape[1]}")
    return softmax(X @ model.weights.T + model.bias, axis=1)


def predict(model: LinearSurrogate, X) -> np.ndarray:
    return np.array(model.classes)[np.argmax(predict_proba(model, X), axis=1)]


@dataclass(frozen=True)
class EvaluationResult:
    accuracy: float
    macro_f1: float
    absent_classes: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1, "absent_classes": list(self.absent_classes)}


def evaluate_predictions(y, y_pred, classes: Sequence[int]) -> EvaluationResult:
    y, y_pred = np.asarray(y), np.asarray(y_pred)
    if y.shape[0] != y_pred.shape[0]:
        raise RowMismatch(f"{y.shape[0]} targets for {y_pred.shape[0]} predictions")
    present = set(y.tolist()) | set(y_pred.tolist())
    absent = tuple(int(c) for c in classes if c not in present)
    if absent:
        logger.warning(f"Classes absent from targets and predictions score F1=0: {list(absent)}")
    return EvaluationResult(
        accuracy=float(accuracy_score(y, y_pred)),
        macro_f1=float(f1_score(y, y_pred, labels=list(classes), average="macro", zero_division=0)),
        absent_classes=absent,
    )


def evaluate(model: LinearSurrogate, X, y) -> EvaluationResult:
    X = np.asarray(X, dtype="float64")
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise RowMismatch(f"{y.shape[0]} targets for {X.shape[0]} rows")
    return evaluate_predictions(y, predict(model, X), model.classes)


class SurrogateBlackBox:
    """Callable probability function over a LinearSurrogate that also exposes input gradients."""

    def __init__(self, model: LinearSurrogate):
        self.model = model

    @property
    def n_classes(self) -> int:
        return len(self.model.classes)

    def __call__(self, X) -> np.ndarray:
        return predict_proba(self.model, X)

    def gradient(self, x, class_index: int) -> np.ndarray:
        """d p_t / d x = p_t (W_t - sum_j p_j W_j)."""
        p = predict_proba(self.model, x)[0]
        W = self.model.weights
        return p[class_index] * (W[class_index] - p @ W)
