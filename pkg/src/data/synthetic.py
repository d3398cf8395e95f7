"""Synthetic wearable-style data compatible with `config/schema.yaml`.

Entities fall into two behavioural groups (an active, well-rested group and a
sedentary, short-sleeping one) so the demo pipeline has a clear two-cluster
structure. Feature cadences mimic the real sources: hourly activity, daily
sleep/heart summaries, sparse mood entries and one-off surveys.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from src.utils.random_utils import rng_for
from src.utils.time_utils import HOUR_S, to_iso


START_TS = 1_609_459_200  # 2021-01-01T00:00:00Z
PLACES = ("home", "work", "outdoors")

# group -> feature -> (mean, sd)
PROFILES = {
    0: {
        "steps": (900.0, 60.0),
        "calories": (140.0, 8.0),
        "sedentary_minutes": (20.0, 3.0),
        "lightly_active_minutes": (30.0, 3.0),
        "sleep_duration": (480.0, 15.0),
        "resting_heart_rate": (58.0, 1.5),
        "stress_score": (78.0, 4.0),
        "mood_value": (4.0, 0.5),
        "stai_stress": (32.0, 3.0),
        "age": (29.0, 3.0),
    },
    1: {
        "steps": (150.0, 60.0),
        "calories": (80.0, 8.0),
        "sedentary_minutes": (52.0, 3.0),
        "lightly_active_minutes": (6.0, 3.0),
        "sleep_duration": (360.0, 15.0),
        "resting_heart_rate": (72.0, 1.5),
        "stress_score": (62.0, 4.0),
        "mood_value": (2.0, 0.5),
        "stai_stress": (48.0, 3.0),
        "age": (35.0, 3.0),
    },
}


def generate_demo_frame(seed: int, n_entities: int = 8, hours: int = 50) -> pd.DataFrame:
    rows = []
    for e in range(n_entities):
        group = 0 if e < n_entities // 2 else 1
        prof = PROFILES[group]
        rng = rng_for(seed, "entity", e)
        entity = f"p{e + 1:02d}"
        age = round(float(rng.normal(*prof["age"])))
        stai = round(float(rng.normal(*prof["stai_stress"])), 1)
        for h in range(hours):
            ts = START_TS + h * HOUR_S
            row = {"id": entity, "date": to_iso(ts)}
            for name in ("steps", "calories", "sedentary_minutes", "lightly_active_minutes"):
                mu, sd = prof[name]
                row[name] = round(max(0.0, float(rng.normal(mu, sd))), 2)
            # daily summaries land on the first hour of each day
            if h % 24 == 0:
                for name in ("sleep_duration", "resting_heart_rate", "stress_score"):
                    row[name] = round(float(rng.normal(*prof[name])), 2)
            if h % 7 == 3:
                row["mood_value"] = int(np.clip(round(float(rng.normal(*prof["mood_value"]))), 1, 5))
            if h == 0:
                row["stai_stress"] = stai
                row["age"] = age
            p_home = 0.8 if group else 0.3
            row["place"] = PLACES[0] if rng.random() < p_home else PLACES[1 + int(rng.random() < 0.5)]
            rows.append(row)

    columns = [
        "id", "date", "steps", "calories", "sedentary_minutes", "lightly_active_minutes",
        "sleep_duration", "resting_heart_rate", "place", "stress_score", "mood_value",
        "stai_stress", "age",
    ]
    return pd.DataFrame(rows).reindex(columns=columns)


def write_demo_csv(path: str | Path, seed: int, n_entities: int = 8, hours: int = 50) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    df = generate_demo_frame(seed, n_entities=n_entities, hours=hours)
    df.to_csv(p, index=False, lineterminator="\n")
    logger.info(f"Synthetic data written: path={p} rows={len(df)} entities={n_entities}")
    return p


def two_blobs(seed: int, n_per: int = 20, d: int = 2, separation: float = 10.0, sd: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Two Gaussian blobs; returns (X, true labels)."""
    rng = rng_for(seed, "blobs")
    centers = np.zeros((2, d))
    centers[1, 0] = separation
    X = np.vstack([rng.normal(centers[c], sd, size=(n_per, d)) for c in (0, 1)])
    y = np.repeat([0, 1], n_per)
    return X, y
