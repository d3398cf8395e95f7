"""Feature schema, preprocessing spec and the Dataset container.

Everything here is declarative: the YAML in `config/schema.yaml` and
`config/preprocess.yaml` maps 1:1 onto these dataclasses, keys matching the
enum values below.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import yaml

from src.errors import ConfigError, MissingFile, UnknownFeature


class Category(str, Enum):
    PHYSICAL_ACTIVITY = "physical_activity"
    SLEEP = "sleep"
    HEALTH = "health"
    MENTAL_HEALTH = "mental_health"
    DEMOGRAPHICS = "demographics"
    PERSONALITY = "personality"
    BEHAVIOR = "behavior"
    OTHER = "other"


class Kind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    ORDINAL = "ordinal"


class NativeGranularity(str, Enum):
    SUB_HOURLY = "sub_hourly"
    HOURLY = "hourly"
    DAILY = "daily"
    MULTI_DAY = "multi_day"
    WEEKLY = "weekly"
    ARBITRARY = "arbitrary"
    ENTRY = "entry"


class Aggregation(str, Enum):
    SUM = "sum"
    MEAN = "mean"
    COUNT = "count"
    LAST = "last"
    NONE = "none"


class GranularityFill(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    DAILY = "daily"
    PERIODIC = "periodic"
    NONE = "none"


class MissingPolicy(str, Enum):
    MEAN = "mean"
    ZERO = "zero"
    MODE = "mode"
    DROP = "drop"
    NONE = "none"


class Encoding(str, Enum):
    NONE = "none"
    ONE_HOT = "one_hot"
    ORDINAL = "ordinal"


class TargetGranularity(str, Enum):
    HOURLY = "hourly"
    DAILY = "daily"


class Normalization(str, Enum):
    ZSCORE = "zscore"
    MINMAX = "minmax"
    NONE = "none"


class Role(str, Enum):
    TRAINING = "training"
    VALIDATION = "validation"


@dataclass(frozen=True)
class FeatureSchema:
    name: str
    category: Category
    kind: Kind = Kind.NUMERIC
    native_granularity: NativeGranularity = NativeGranularity.ARBITRARY
    levels: tuple[str, ...] = ()
    role: Role = Role.TRAINING
    description: str = ""

    def __post_init__(self):
        if self.kind in (Kind.CATEGORICAL, Kind.ORDINAL) and not self.levels:
            raise ConfigError(f"Feature {self.name!r} is {self.kind.value} but declares no levels")

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        try:
            return cls(
                name=str(d["name"]),
                category=Category(d.get("category", "other")),
                kind=Kind(d.get("kind", "numeric")),
                native_granularity=NativeGranularity(d.get("native_granularity", "arbitrary")),
                levels=tuple(str(x) for x in (d.get("levels") or ())),
                role=Role(d.get("role", "training")),
                description=str(d.get("description") or ""),
            )
        except (KeyError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid feature schema entry {dict(d)!r}: {e}") from e

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "category": self.category.value,
            "kind": self.kind.value,
            "native_granularity": self.native_granularity.value,
            "role": self.role.value,
        }
        if self.levels:
            out["levels"] = list(self.levels)
        if self.description:
            out["description"] = self.description
        return out


class Schema:
    """Ordered, name-unique set of FeatureSchema records."""

    def __init__(self, features: Iterable[FeatureSchema]):
        self._features: dict[str, FeatureSchema] = {}
        for f in features:
            if f.name in self._features:
                raise ConfigError(f"Duplicate feature name in schema: {f.name!r}")
            self._features[f.name] = f

    def __iter__(self):
        return iter(self._features.values())

    def __len__(self) -> int:
        return len(self._features)

    def __contains__(self, name: str) -> bool:
        return name in self._features

    def __getitem__(self, name: str) -> FeatureSchema:
        try:
            return self._features[name]
        except KeyError:
            raise UnknownFeature(f"Feature not in schema: {name!r}") from None

    @property
    def names(self) -> list[str]:
        return list(self._features)

    def with_role(self, role: Role) -> list[str]:
        return [f.name for f in self if f.role == role]

    def in_categories(self, categories: Iterable[str]) -> list[str]:
        wanted = {Category(c) for c in categories}
        return [f.name for f in self if f.category in wanted]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for f in self:
            h.update(repr(sorted(f.to_dict().items())).encode("utf-8"))
        return h.hexdigest()

    @classmethod
    def from_yaml(cls, path: str | Path) -> "Schema":
        data = _read_yaml(path)
        entries = data.get("features") if isinstance(data, dict) else data
        if not entries:
            raise ConfigError(f"Schema file has no features: {path}")
        return cls(FeatureSchema.from_dict(e) for e in entries)

    def to_dict(self) -> dict:
        return {"features": [f.to_dict() for f in self]}


@dataclass(frozen=True)
class FeatureSteps:
    aggregation: Aggregation = Aggregation.MEAN
    granularity_fill: GranularityFill = GranularityFill.NONE
    missing_policy: MissingPolicy = MissingPolicy.MEAN
    encoding: Encoding = Encoding.NONE

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "FeatureSteps":
        d = d or {}
        try:
            return cls(
                aggregation=Aggregation(d.get("aggregation", "mean")),
                granularity_fill=GranularityFill(d.get("granularity_fill", "none")),
                missing_policy=MissingPolicy(d.get("missing_policy", "mean")),
                encoding=Encoding(d.get("encoding", "none")),
            )
        except ValueError as e:
            raise ConfigError(f"Invalid preprocessing steps {dict(d)!r}: {e}") from e


@dataclass(frozen=True)
class PreprocessSpec:
    features: Mapping[str, FeatureSteps]
    target_granularity: TargetGranularity = TargetGranularity.HOURLY
    normalization: Normalization = Normalization.ZSCORE
    pca_variance: Optional[float] = None

    def steps(self, name: str) -> FeatureSteps:
        try:
            return self.features[name]
        except KeyError:
            raise UnknownFeature(f"No preprocessing steps declared for {name!r}") from None

    def for_granularity(self, granularity: str) -> "PreprocessSpec":
        return replace(self, target_granularity=TargetGranularity(granularity))

    def validate(self, schema: Schema) -> None:
        for name, steps in self.features.items():
            if name not in schema:
                raise UnknownFeature(f"Preprocess spec references unknown feature {name!r}")
            kind = schema[name].kind
            if steps.encoding == Encoding.ONE_HOT and kind != Kind.CATEGORICAL:
                raise ConfigError(f"one_hot encoding requires a categorical feature: {name!r}")
            if steps.encoding == Encoding.ORDINAL and kind != Kind.ORDINAL:
                raise ConfigError(f"ordinal encoding requires an ordinal feature: {name!r}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "PreprocessSpec":
        try:
            pca = d.get("pca_variance")
            return cls(
                features={str(k): FeatureSteps.from_dict(v) for k, v in (d.get("features") or {}).items()},
                target_granularity=TargetGranularity(d.get("target_granularity", "hourly")),
                normalization=Normalization(d.get("normalization", "zscore")),
                pca_variance=float(pca) if pca is not None else None,
            )
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid preprocess spec: {e}") from e


@dataclass(frozen=True)
class VariantSpec:
    name: str
    granularity: TargetGranularity
    categories: tuple[str, ...] = ()
    features: tuple[str, ...] = ()
    max_missing: Optional[float] = None

    @property
    def key(self) -> str:
        return f"{self.granularity.value}_{self.name}"

    @classmethod
    def from_dict(cls, d: Mapping) -> "VariantSpec":
        try:
            mm = d.get("max_missing")
            return cls(
                name=str(d["name"]),
                granularity=TargetGranularity(d.get("granularity", "hourly")),
                categories=tuple(Category(c).value for c in (d.get("categories") or ())),
                features=tuple(str(f) for f in (d.get("features") or ())),
                max_missing=float(mm) if mm is not None else None,
            )
        except (KeyError, ValueError) as e:
            raise ConfigError(f"Invalid variant spec {dict(d)!r}: {e}") from e


def canonical_variants(
    categories: Sequence[str] = ("physical_activity", "sleep", "health"),
    clean_features: Sequence[str] = (),
    max_missing: float = 0.6,
) -> list[VariantSpec]:
    """The (hourly|daily) x (full|categories|clean) grid."""
    out = []
    for g in (TargetGranularity.HOURLY, TargetGranularity.DAILY):
        out.append(VariantSpec(name="full", granularity=g))
        out.append(VariantSpec(name="categories", granularity=g, categories=tuple(categories)))
        out.append(
            VariantSpec(
                name="clean",
                granularity=g,
                features=tuple(clean_features),
                max_missing=None if clean_features else max_missing,
            )
        )
    return out


def load_preprocess_config(path: str | Path) -> tuple[PreprocessSpec, list[VariantSpec], dict]:
    """Read `config/preprocess.yaml`: (spec, variants, raw extra keys)."""
    data = _read_yaml(path)
    if not isinstance(data, dict) or "preprocess" not in data:
        raise ConfigError(f"Preprocess config must have a 'preprocess' section: {path}")
    spec = PreprocessSpec.from_dict(data["preprocess"])
    variants = [VariantSpec.from_dict(v) for v in (data.get("variants") or [])]
    return spec, variants, {k: v for k, v in data.items() if k not in {"preprocess", "variants"}}


def _read_yaml(path: str | Path):
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"Config not found: {p}")
    with open(p) as f:
        return yaml.safe_load(f) or {}


INDICATOR_SEP = "="


def base_feature(column: str) -> str:
    """`place=home` -> `place`; plain names pass through."""
    return column.split(INDICATOR_SEP, 1)[0]


def is_indicator(column: str) -> bool:
    return INDICATOR_SEP in column


@dataclass(frozen=True, eq=False)
class Dataset:
    values: np.ndarray
    feature_names: tuple[str, ...]
    entity_ids: tuple[str, ...]
    timestamps: np.ndarray
    role: Role = Role.TRAINING
    granularity: str = "hourly"
    # categorical/ordinal columns hold float codes into these vocabularies
    levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype="float64")
        if v.ndim != 2:
            v = v.reshape(len(self.entity_ids), -1)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "timestamps", np.asarray(self.timestamps, dtype="int64"))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "entity_ids", tuple(str(e) for e in self.entity_ids))
        if v.shape[1] != len(self.feature_names):
            raise ValueError(
                f"Column count {v.shape[1]} does not match feature_names ({len(self.feature_names)})"
            )
        if v.shape[0] != len(self.entity_ids) or v.shape[0] != len(self.timestamps):
            raise ValueError("Row keys do not match the value matrix")

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.values.shape[1])

    def index_of(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise UnknownFeature(f"Column not in dataset: {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index_of(name)]

    def row_key(self, i: int) -> str:
        return f"{self.entity_ids[i]}@{int(self.timestamps[i])}"

    def row_keys(self) -> list[str]:
        return [self.row_key(i) for i in range(self.n_rows)]

    def row_index(self, key: str) -> int:
        keys = self.row_keys()
        try:
            return keys.index(key)
        except ValueError:
            raise UnknownFeature(f"Instance not in dataset: {key!r}") from None

    def with_values(self, values: np.ndarray, feature_names: Sequence[str] | None = None, **changes) -> "Dataset":
        names = tuple(feature_names) if feature_names is not None else self.feature_names
        levels = changes.pop("levels", {k: v for k, v in self.levels.items() if k in names})
        return replace(self, values=values, feature_names=names, levels=levels, **changes)

    def select_columns(self, names: Sequence[str]) -> "Dataset":
        idx = [self.index_of(n) for n in names]
        return self.with_values(self.values[:, idx].copy(), feature_names=list(names))

    def select_rows(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return replace(
            self,
            values=self.values[rows].copy(),
            entity_ids=tuple(self.entity_ids[i] for i in rows),
            timestamps=self.timestamps[rows].copy(),
        )

    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())
