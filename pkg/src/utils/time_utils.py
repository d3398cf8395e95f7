"""Time utilities for the preprocessing pipeline.

Timestamps are carried as integer epoch seconds (UTC). Input columns may hold
either epoch seconds or ISO-8601 strings; naive ISO strings are localized to
the configured time zone before conversion.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
import pandas as pd
import pytz


HOUR_S = 3600
DAY_S = 86400

GRANULARITY_SECONDS = {"hourly": HOUR_S, "daily": DAY_S}


def detect_timestamp_format(values: Iterable) -> str:
    """Return "epoch" if every non-empty cell is numeric, else "iso"."""
    s = pd.Series(list(values), dtype="object").dropna().astype(str).str.strip()
    s = s[s != ""]
    if s.empty:
        return "epoch"
    numeric = pd.to_numeric(s, errors="coerce")
    return "epoch" if numeric.notna().all() else "iso"


def parse_timestamps(values: Iterable, fmt: str, tz: str = "UTC") -> np.ndarray:
    """Parse a column into epoch seconds (int64). Unparseable cells raise."""
    s = pd.Series(list(values), dtype="object")
    if fmt == "epoch":
        out = pd.to_numeric(s, errors="raise").astype("float64")
        return np.floor(out.to_numpy()).astype("int64")

    parsed = pd.to_datetime(s.astype(str), errors="raise", utc=False, format="mixed")
    if getattr(parsed.dt, "tz", None) is None:
        parsed = parsed.dt.tz_localize(pytz.timezone(tz))
    parsed = parsed.dt.tz_convert(pytz.UTC)
    epoch = pd.Timestamp("1970-01-01", tz="UTC")
    return ((parsed - epoch) // pd.Timedelta(seconds=1)).to_numpy().astype("int64")


def floor_to_bucket(ts: np.ndarray, granularity: str) -> np.ndarray:
    step = GRANULARITY_SECONDS[granularity]
    ts = np.asarray(ts, dtype="int64")
    return (ts // step) * step


def day_start(ts: np.ndarray) -> np.ndarray:
    return floor_to_bucket(ts, "daily")


def to_iso(ts: int) -> str:
    return pd.Timestamp(int(ts), unit="s", tz="UTC").isoformat()
