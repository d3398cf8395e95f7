"""CSV ingestion.

`load_csv` turns a wide CSV (one row per entity and observation time) into a
RawTable: a pandas frame with `entity_id`, `timestamp` (epoch seconds) and one
float column per schema feature. Categorical and ordinal features are stored
as float codes into a per-feature level vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import yaml
from loguru import logger

from src.data.schema import Dataset, Kind, Role, Schema
from src.errors import EmptyTable, HeaderMismatch, MissingFile
from src.utils.time_utils import detect_timestamp_format, parse_timestamps


ID_CANDIDATES = ("id", "entity_id", "participant_id", "user_id")
TIME_CANDIDATES = ("date", "timestamp", "time", "datetime")


@dataclass(frozen=True)
class LoadReport:
    path: str
    rows: int
    id_column: str
    time_column: str
    timestamp_format: str
    features: tuple[str, ...]
    ignored_columns: tuple[str, ...] = ()
    missing_features: tuple[str, ...] = ()
    coerced_cells: dict = field(default_factory=dict)
    missing_fraction: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "rows": self.rows,
            "id_column": self.id_column,
            "time_column": self.time_column,
            "timestamp_format": self.timestamp_format,
            "features": list(self.features),
            "ignored_columns": list(self.ignored_columns),
            "missing_features": list(self.missing_features),
            "coerced_cells": dict(self.coerced_cells),
            "missing_fraction": {k: round(float(v), 6) for k, v in self.missing_fraction.items()},
        }


@dataclass(frozen=True, eq=False)
class RawTable:
    frame: pd.DataFrame
    schema: Schema
    levels: dict
    report: LoadReport

    @property
    def feature_names(self) -> list[str]:
        return [c for c in self.frame.columns if c not in ("entity_id", "timestamp")]

    def __len__(self) -> int:
        return len(self.frame)


def _pick(columns: Sequence[str], wanted: Optional[str], candidates: Sequence[str], what: str, path: Path) -> str:
    if wanted:
        if wanted not in columns:
            raise HeaderMismatch(f"{what} column {wanted!r} not in header of {path}")
        return wanted
    for c in candidates:
        if c in columns:
            return c
    raise HeaderMismatch(f"No {what} column in {path} (looked for {', '.join(candidates)})")


def _code_levels(values: pd.Series, declared: Sequence[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    """Map strings to float codes; declared levels first, unseen appended in order of appearance."""
    vocab = list(declared)
    index = {lvl: i for i, lvl in enumerate(vocab)}
    codes = np.full(len(values), np.nan)
    for i, v in enumerate(values.tolist()):
        if v is None or (isinstance(v, float) and np.isnan(v)):
            continue
        s = str(v).strip()
        if s == "":
            continue
        if s not in index:
            index[s] = len(vocab)
            vocab.append(s)
        codes[i] = index[s]
    return codes, tuple(vocab)


def load_csv(
    path: str | Path,
    schema: Schema,
    id_column: Optional[str] = None,
    time_column: Optional[str] = None,
    time_zone: str = "UTC",
) -> RawTable:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"Data file not found: {p}")

    df = pd.read_csv(p, dtype=str, keep_default_na=False, encoding="utf-8")
    columns = list(df.columns)
    id_col = _pick(columns, id_column, ID_CANDIDATES, "entity id", p)
    time_col = _pick(columns, time_column, TIME_CANDIDATES, "timestamp", p)

    features = [c for c in columns if c in schema]
    if not features:
        raise HeaderMismatch(f"Header of {p} shares no feature name with the schema")
    ignored = [c for c in columns if c not in schema and c not in (id_col, time_col)]
    if ignored:
        logger.warning(f"Ignoring columns not in schema: file={p.name} columns={ignored}")
    if df.empty:
        raise EmptyTable(f"No data rows in {p}")

    ts_values = df[time_col].replace("", np.nan)
    if ts_values.isna().any():
        raise EmptyTable(f"Rows without timestamp in {p}: {int(ts_values.isna().sum())}")
    fmt = detect_timestamp_format(ts_values)

    out = pd.DataFrame(
        {
            "entity_id": df[id_col].astype(str).str.strip(),
            "timestamp": parse_timestamps(ts_values, fmt, tz=time_zone),
        }
    )

    levels: dict[str, tuple[str, ...]] = {}
    coerced: dict[str, int] = {}
    missing: dict[str, float] = {}
    for name in features:
        raw = df[name].str.strip()
        fs = schema[name]
        if fs.kind == Kind.NUMERIC:
            blank = raw == ""
            parsed = pd.to_numeric(raw.where(~blank), errors="coerce")
            bad = int((parsed.isna() & ~blank).sum())
            if bad:
                coerced[name] = bad
                logger.warning(f"Unparseable numeric cells set to missing: feature={name} cells={bad}")
            out[name] = parsed.astype("float64").to_numpy()
        else:
            codes, vocab = _code_levels(raw, fs.levels)
            out[name] = codes
            levels[name] = vocab
        missing[name] = float(out[name].isna().mean())

    for name in schema.names:
        if name not in missing:
            missing[name] = 1.0

    out = out.sort_values(["entity_id", "timestamp"], kind="mergesort").reset_index(drop=True)
    report = LoadReport(
        path=str(p),
        rows=len(out),
        id_column=id_col,
        time_column=time_col,
        timestamp_format=fmt,
        features=tuple(features),
        ignored_columns=tuple(ignored),
        missing_features=tuple(n for n in schema.names if n not in features),
        coerced_cells=coerced,
        missing_fraction=missing,
    )
    logger.info(f"Loaded CSV: file={p.name} rows={len(out)} features={len(features)} timestamps={fmt}")
    return RawTable(frame=out, schema=schema, levels=levels, report=report)


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    """CSV body plus a YAML sidecar (`<name>.meta.yaml`) holding role, granularity and levels."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(ds.values, columns=list(ds.feature_names))
    df.insert(0, "timestamp", ds.timestamps)
    df.insert(0, "entity_id", list(ds.entity_ids))
    df.to_csv(p, index=False, lineterminator="\n")
    meta = {
        "role": ds.role.value,
        "granularity": ds.granularity,
        "feature_names": list(ds.feature_names),
        "levels": {k: list(v) for k, v in ds.levels.items()},
    }
    with open(_meta_path(p), "w") as f:
        yaml.safe_dump(meta, f, sort_keys=True)
    return p


def load_dataset(path: str | Path) -> Dataset:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"Dataset not found: {p}")
    meta_path = _meta_path(p)
    meta = {}
    if meta_path.exists():
        with open(meta_path) as f:
            meta = yaml.safe_load(f) or {}
    df = pd.read_csv(p, dtype={"entity_id": str}, float_precision="round_trip", keep_default_na=False)
    names = meta.get("feature_names") or [c for c in df.columns if c not in ("entity_id", "timestamp")]
    if df.empty:
        raise EmptyTable(f"No rows in dataset {p}")
    return Dataset(
        values=df.iloc[:, 2:].to_numpy(dtype="float64"),
        feature_names=names,
        entity_ids=df["entity_id"].tolist(),
        timestamps=df["timestamp"].to_numpy(dtype="int64"),
        role=Role(meta.get("role", "training")),
        granularity=str(meta.get("granularity", "hourly")),
        levels={k: tuple(v) for k, v in (meta.get("levels") or {}).items()},
    )


def _meta_path(p: Path) -> Path:
    return p.with_name(p.stem + ".meta.yaml")
