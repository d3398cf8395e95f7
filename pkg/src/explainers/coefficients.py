"""Global white-box explanation: the surrogate's weight row for a class."""

from __future__ import annotations

from src.errors import UnknownClass
from src.explainers.types import FeatureImportanceVector
from src.surrogate.linear import LinearSurrogate


def coefficients_explain(model: LinearSurrogate, class_id: int) -> FeatureImportanceVector:
    if int(class_id) not in model.classes:
        raise UnknownClass(f"Class {class_id} not in surrogate classes {list(model.classes)}")
    row = model.class_index(class_id)
    names = model.feature_names or tuple(f"x{i}" for i in range(model.n_features))
    return FeatureImportanceVector.from_arrays(
        names,
        model.weights[row],
        method="coefficients",
        instance_id="global",
        intercept=float(model.bias[row]),
        meta={"class": int(class_id)},
    )
