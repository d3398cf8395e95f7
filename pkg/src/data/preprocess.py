"""Declarative preprocessing steps.

Order used by `run_preprocess`: aggregate -> fill_granularity -> impute ->
encode -> normalize. `reduce_dimensions` is applied per variant afterwards,
once training columns are separated. Every step returns a new Dataset; inputs
are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger
from sklearn.decomposition import PCA

from src.data.loader import RawTable
from src.data.schema import (
    INDICATOR_SEP,
    Aggregation,
    Dataset,
    Encoding,
    GranularityFill,
    Kind,
    MissingPolicy,
    Normalization,
    PreprocessSpec,
    Schema,
    base_feature,
    is_indicator,
)
from src.errors import AllMissingColumn, ResidualMissing, UnknownLevel, UnsupportedAggregator
from src.utils.time_utils import day_start, floor_to_bucket, GRANULARITY_SECONDS


CATEGORICAL_AGGREGATIONS = {Aggregation.LAST, Aggregation.COUNT, Aggregation.NONE}


def _frame(ds: Dataset) -> pd.DataFrame:
    df = pd.DataFrame(ds.values, columns=list(ds.feature_names))
    df.insert(0, "timestamp", ds.timestamps)
    df.insert(0, "entity_id", list(ds.entity_ids))
    return df


def aggregate(raw: RawTable, spec: PreprocessSpec) -> Dataset:
    """One row per (entity, bucket) over a contiguous per-entity bucket grid."""
    granularity = spec.target_granularity.value
    step = GRANULARITY_SECONDS[granularity]
    features = [f for f in raw.feature_names if f in spec.features]
    dropped = [f for f in raw.feature_names if f not in spec.features]
    if dropped:
        logger.warning(f"Features without preprocessing steps dropped: {dropped}")

    for name in features:
        agg = spec.steps(name).aggregation
        if raw.schema[name].kind != Kind.NUMERIC and agg not in CATEGORICAL_AGGREGATIONS:
            raise UnsupportedAggregator(
                f"Aggregation {agg.value!r} is not defined for {raw.schema[name].kind.value} feature {name!r}"
            )

    df = raw.frame.copy()
    df["bucket"] = floor_to_bucket(df["timestamp"].to_numpy(), granularity)
    grouped = df.groupby(["entity_id", "bucket"], sort=True)

    columns = {}
    for name in features:
        agg = spec.steps(name).aggregation
        g = grouped[name]
        if agg == Aggregation.SUM:
            columns[name] = g.sum(min_count=1)
        elif agg == Aggregation.MEAN:
            columns[name] = g.mean()
        elif agg == Aggregation.COUNT:
            columns[name] = g.count().astype("float64")
        elif agg == Aggregation.LAST:
            columns[name] = g.last()
        else:
            columns[name] = g.first()
    out = pd.DataFrame(columns, columns=features)

    spans = df.groupby("entity_id", sort=True)["bucket"].agg(["min", "max"])
    grid = [
        (entity, b)
        for entity, row in spans.iterrows()
        for b in range(int(row["min"]), int(row["max"]) + 1, step)
    ]
    out = out.reindex(pd.MultiIndex.from_tuples(grid, names=["entity_id", "bucket"]))
    for name in features:
        if spec.steps(name).aggregation == Aggregation.COUNT:
            out[name] = out[name].fillna(0.0)

    logger.info(f"Aggregated: granularity={granularity} rows={len(out)} features={len(features)}")
    return Dataset(
        values=out.to_numpy(dtype="float64"),
        feature_names=features,
        entity_ids=[e for e, _ in grid],
        timestamps=np.array([b for _, b in grid], dtype="int64"),
        granularity=granularity,
        levels={k: v for k, v in raw.levels.items() if k in features},
    )


def fill_granularity(ds: Dataset, spec: PreprocessSpec) -> Dataset:
    df = _frame(ds)
    days = day_start(ds.timestamps)
    for name in ds.feature_names:
        mode = spec.steps(base_feature(name)).granularity_fill
        if mode == GranularityFill.FORWARD:
            df[name] = df.groupby("entity_id", sort=False)[name].ffill()
        elif mode == GranularityFill.BACKWARD:
            df[name] = df.groupby("entity_id", sort=False)[name].bfill()
        elif mode == GranularityFill.PERIODIC:
            df[name] = df.groupby("entity_id", sort=False)[name].transform(lambda s: s.ffill().bfill())
        elif mode == GranularityFill.DAILY and ds.granularity == "hourly":
            df[name] = df.groupby([df["entity_id"], days], sort=False)[name].transform(
                lambda s: s.ffill().bfill()
            )
    return ds.with_values(df[list(ds.feature_names)].to_numpy(dtype="float64"))


def _mode(col: np.ndarray) -> float:
    values, counts = np.unique(col[~np.isnan(col)], return_counts=True)
    # np.unique sorts, so argmax picks the lowest value among ties
    return float(values[int(np.argmax(counts))])


def impute(ds: Dataset, spec: PreprocessSpec) -> Dataset:
    values = ds.values.copy()
    drop = np.zeros(ds.n_rows, dtype=bool)
    for j, name in enumerate(ds.feature_names):
        col = values[:, j]
        miss = np.isnan(col)
        if not miss.any():
            continue
        policy = spec.steps(base_feature(name)).missing_policy
        if policy in (MissingPolicy.MEAN, MissingPolicy.MODE) and miss.all():
            raise AllMissingColumn(f"Column {name!r} has no observed value to impute from")
        if policy == MissingPolicy.MEAN:
            col[miss] = float(np.mean(col[~miss]))
        elif policy == MissingPolicy.MODE:
            col[miss] = _mode(col)
        elif policy == MissingPolicy.ZERO:
            col[miss] = 0.0
        elif policy == MissingPolicy.DROP:
            drop |= miss

    if drop.any():
        logger.info(f"Dropping rows with missing values: rows={int(drop.sum())}")
    out = ds.with_values(values)
    if drop.any():
        out = out.select_rows(~drop)
    if out.has_missing():
        bad = [n for j, n in enumerate(out.feature_names) if np.isnan(out.values[:, j]).any()]
        raise ResidualMissing(f"Missing values remain after imputation: {bad}")
    return out


def encode(ds: Dataset, spec: PreprocessSpec, schema: Schema) -> Dataset:
    blocks: list[np.ndarray] = []
    names: list[str] = []
    levels = {}
    for j, name in enumerate(ds.feature_names):
        col = ds.values[:, j]
        encoding = spec.steps(name).encoding
        if encoding == Encoding.NONE:
            blocks.append(col[:, None])
            names.append(name)
            if name in ds.levels:
                levels[name] = ds.levels[name]
            continue

        declared = schema[name].levels
        observed = col[~np.isnan(col)]
        if observed.size and observed.max() >= len(declared):
            vocab = ds.levels.get(name, declared)
            unknown = sorted({vocab[int(c)] for c in observed if c >= len(declared)})
            raise UnknownLevel(f"Values outside the declared levels of {name!r}: {unknown}")

        if encoding == Encoding.ORDINAL:
            blocks.append(col[:, None])
            names.append(name)
            levels[name] = tuple(declared)
        else:
            onehot = np.zeros((ds.n_rows, len(declared)))
            for k in range(len(declared)):
                onehot[:, k] = (col == k).astype("float64")
            onehot[np.isnan(col)] = np.nan
            blocks.append(onehot)
            names.extend(f"{name}{INDICATOR_SEP}{lvl}" for lvl in declared)

    values = np.hstack(blocks) if blocks else np.zeros((ds.n_rows, 0))
    return ds.with_values(values, feature_names=names, levels=levels)


@dataclass(frozen=True)
class NormalizationStats:
    mode: str
    columns: tuple[str, ...]
    offset: tuple[float, ...]
    scale: tuple[float, ...]

    def _index(self, names) -> list[int]:
        return [self.columns.index(n) for n in names]

    def transform(self, x: np.ndarray, names=None) -> np.ndarray:
        idx = self._index(names) if names is not None else list(range(len(self.columns)))
        off = np.asarray(self.offset)[idx]
        sc = np.asarray(self.scale)[idx]
        x = np.asarray(x, dtype="float64")
        safe = np.where(sc > 0, sc, 1.0)
        return np.where(sc > 0, (x - off) / safe, 0.0)

    def inverse(self, z: np.ndarray, names=None) -> np.ndarray:
        idx = self._index(names) if names is not None else list(range(len(self.columns)))
        off = np.asarray(self.offset)[idx]
        sc = np.asarray(self.scale)[idx]
        return np.asarray(z, dtype="float64") * sc + off

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "columns": list(self.columns),
            "offset": [float(v) for v in self.offset],
            "scale": [float(v) for v in self.scale],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(
            mode=str(d["mode"]),
            columns=tuple(d["columns"]),
            offset=tuple(float(v) for v in d["offset"]),
            scale=tuple(float(v) for v in d["scale"]),
        )


def normalize(ds: Dataset, mode: Normalization | str = Normalization.ZSCORE) -> tuple[Dataset, NormalizationStats]:
    """Population-sigma zscore or minmax. Indicator columns keep offset 0 / scale 1."""
    mode = Normalization(mode)
    offsets, scales = [], []
    for j, name in enumerate(ds.feature_names):
        col = ds.values[:, j]
        if mode == Normalization.NONE or is_indicator(name) or col.size == 0:
            offsets.append(0.0)
            scales.append(1.0)
        elif mode == Normalization.ZSCORE:
            offsets.append(float(np.mean(col)))
            scales.append(float(np.std(col)))
        else:
            lo, hi = float(np.min(col)), float(np.max(col))
            offsets.append(lo)
            scales.append(hi - lo)
    stats = NormalizationStats(
        mode=mode.value,
        columns=tuple(ds.feature_names),
        offset=tuple(offsets),
        scale=tuple(scales),
    )
    return ds.with_values(stats.transform(ds.values)), stats


@dataclass(frozen=True)
class OutlierReport:
    factor: float
    quantile_rule: str
    rows_before: int
    rows_removed: int
    removed_per_feature: dict = field(default_factory=dict)
    fences: dict = field(default_factory=dict)
    kept_rows: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "factor": "unbounded" if np.isinf(self.factor) else self.factor,
            "quantile_rule": self.quantile_rule,
            "rows_before": self.rows_before,
            "rows_removed": self.rows_removed,
            "removed_per_feature": dict(self.removed_per_feature),
        }


def remove_outliers_iqr(ds: Dataset, factor: float = 1.5) -> tuple[Dataset, OutlierReport]:
    """Drop rows with any feature outside [Q1 - f*IQR, Q3 + f*IQR].

    Quartiles are numpy's default linear interpolation (type 7), so the column
    1..9 plus 100 gets Q1 = 3.25 and Q3 = 7.75, not the median-of-halves 3 and 8;
    either rule removes the 100 there. Indicator columns are not screened.
    """
    n = ds.n_rows
    if np.isinf(factor) or n == 0:
        return ds, OutlierReport(factor, "linear", n, 0, kept_rows=tuple(range(n)))

    remove = np.zeros(n, dtype=bool)
    per_feature, fences = {}, {}
    for j, name in enumerate(ds.feature_names):
        if is_indicator(name):
            continue
        col = ds.values[:, j]
        q1, q3 = np.percentile(col, [25, 75])
        iqr = q3 - q1
        lo, hi = q1 - factor * iqr, q3 + factor * iqr
        out = (col < lo) | (col > hi)
        fences[name] = (float(lo), float(hi))
        if out.any():
            per_feature[name] = int(out.sum())
            remove |= out

    kept = np.flatnonzero(~remove)
    report = OutlierReport(
        factor=float(factor),
        quantile_rule="linear",
        rows_before=n,
        rows_removed=int(remove.sum()),
        removed_per_feature=per_feature,
        fences=fences,
        kept_rows=tuple(int(i) for i in kept),
    )
    logger.info(f"IQR outlier removal: factor={factor} removed={report.rows_removed}/{n}")
    return ds.select_rows(kept), report


def reduce_dimensions(ds: Dataset, variance: Optional[float] = 0.95, seed: int = 0) -> tuple[Dataset, Optional[PCA]]:
    if variance is None or ds.n_cols == 0:
        return ds, None
    pca = PCA(n_components=variance, svd_solver="full", random_state=seed)
    z = pca.fit_transform(ds.values)
    names = [f"pc{i + 1}" for i in range(z.shape[1])]
    logger.info(f"PCA: variance={variance} components={len(names)} from={ds.n_cols}")
    return ds.with_values(z, feature_names=names, levels={}), pca


def run_preprocess(
    raw: RawTable,
    spec: PreprocessSpec,
    schema: Schema,
) -> tuple[Dataset, NormalizationStats]:
    ds = aggregate(raw, spec)
    ds = fill_granularity(ds, spec)
    ds = impute(ds, spec)
    ds = encode(ds, spec, schema)
    return normalize(ds, spec.normalization)
