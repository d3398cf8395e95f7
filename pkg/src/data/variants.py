"""Training/validation split and feature variants."""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

from loguru import logger

from src.data.schema import Category, Dataset, Role, Schema, VariantSpec, base_feature
from src.errors import OverlappingRoles, UnknownFeature


def _columns_for(ds: Dataset, features: Sequence[str]) -> list[str]:
    wanted = list(dict.fromkeys(features))
    present = {base_feature(c) for c in ds.feature_names}
    missing = [f for f in wanted if f not in present]
    if missing:
        raise UnknownFeature(f"Features not in dataset: {missing}")
    keep = set(wanted)
    return [c for c in ds.feature_names if base_feature(c) in keep]


def split_roles(
    ds: Dataset,
    schema: Schema,
    training_features: Optional[Sequence[str]] = None,
    validation_features: Optional[Sequence[str]] = None,
) -> tuple[Dataset, Dataset]:
    """Columns are matched on base feature names, so `place` selects `place=home`, `place=work`."""
    training = list(training_features) if training_features is not None else schema.with_role(Role.TRAINING)
    validation = list(validation_features) if validation_features is not None else schema.with_role(Role.VALIDATION)
    overlap = sorted(set(training) & set(validation))
    if overlap:
        raise OverlappingRoles(f"Features listed as both training and validation: {overlap}")

    present = {base_feature(c) for c in ds.feature_names}
    if training_features is None:
        training = [f for f in training if f in present]
    if validation_features is None:
        validation = [f for f in validation if f in present]

    train = ds.select_columns(_columns_for(ds, training))
    valid = ds.select_columns(_columns_for(ds, validation))
    return train.with_values(train.values, role=Role.TRAINING), valid.with_values(valid.values, role=Role.VALIDATION)


def select_clean_features(missing_fraction: Mapping[str, float], schema: Schema, max_missing: float = 0.6) -> list[str]:
    """Non-demographic training features observed in more than (1 - max_missing) of raw rows."""
    return [
        f.name
        for f in schema
        if f.role == Role.TRAINING
        and f.category != Category.DEMOGRAPHICS
        and float(missing_fraction.get(f.name, 1.0)) < max_missing
    ]


def make_variants(
    datasets: Dataset | Mapping[str, Dataset],
    specs: Sequence[VariantSpec],
    schema: Schema,
    missing_fraction: Optional[Mapping[str, float]] = None,
) -> dict[str, Dataset]:
    """Build one training Dataset per VariantSpec, keyed `<granularity>_<name>`.

    `datasets` is either a single Dataset (used for every spec) or a mapping
    granularity -> Dataset.
    """
    out: dict[str, Dataset] = {}
    for spec in specs:
        if isinstance(datasets, Dataset):
            ds = datasets
        else:
            try:
                ds = datasets[spec.granularity.value]
            except KeyError:
                raise UnknownFeature(f"No {spec.granularity.value} dataset for variant {spec.key}") from None

        if spec.features:
            features = list(spec.features)
        elif spec.categories:
            cats = {Category(c) for c in spec.categories}
            features = [
                f.name for f in schema if f.category in cats and f.role == Role.TRAINING
            ]
        elif spec.max_missing is not None:
            if missing_fraction is None:
                raise UnknownFeature(f"Variant {spec.key} needs missing fractions from the load report")
            features = select_clean_features(missing_fraction, schema, spec.max_missing)
        else:
            features = [
                f.name for f in schema if f.role == Role.TRAINING and f.category != Category.DEMOGRAPHICS
            ]

        if not spec.features:
            present = {base_feature(c) for c in ds.feature_names}
            features = [f for f in features if f in present]
        if not features:
            raise UnknownFeature(f"Variant {spec.key} selects no columns")

        out[spec.key] = ds.select_columns(_columns_for(ds, features))
        logger.info(f"Variant built: name={spec.key} rows={out[spec.key].n_rows} cols={out[spec.key].n_cols}")
    return out
