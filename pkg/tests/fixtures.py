"""Small deterministic inputs shared by the test modules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from src.clustering.kmeans import kmeans
from src.clustering.models import Algorithm, ClusteringConfig
from src.data.preprocess import NormalizationStats
from src.data.schema import Category, Dataset, FeatureSchema, Role, Schema
from src.data.synthetic import two_blobs
from src.explainers.types import LimeConfig
from src.surrogate.linear import SurrogateConfig, evaluate, train_linear
from src.thesaurus.builder import build_thesaurus, choose_exemplars
from src.validity.indices import compute_validity
from src.validity.profile import characterize_clusters


TRAINING = ("steps", "sleep_duration", "resting_heart_rate")
VALIDATION = ("stress_score",)
FAST_LIME = LimeConfig(n_samples=400, seed=7)


def small_schema() -> Schema:
    return Schema(
        [
            FeatureSchema("steps", Category.PHYSICAL_ACTIVITY, description="number of steps walked"),
            FeatureSchema("sleep_duration", Category.SLEEP, description="minutes asleep"),
            FeatureSchema("resting_heart_rate", Category.HEALTH, description="resting heart rate"),
            FeatureSchema("stress_score", Category.MENTAL_HEALTH, role=Role.VALIDATION, description="stress score"),
        ]
    )


def make_dataset(values, names=TRAINING, role: Role = Role.TRAINING, entity: str = "p") -> Dataset:
    values = np.asarray(values, dtype="float64")
    n = values.shape[0]
    return Dataset(
        values=values,
        feature_names=tuple(names),
        entity_ids=tuple(f"{entity}{i // 10:02d}" for i in range(n)),
        timestamps=np.array([1_609_459_200 + 3600 * (i % 10) for i in range(n)]),
        role=role,
    )


def blob_datasets(seed: int = 0, n_per: int = 20) -> tuple[Dataset, Dataset, np.ndarray]:
    """(training, validation, true labels): two well separated groups in 3 training features."""
    X, y = two_blobs(seed, n_per=n_per, d=len(TRAINING), separation=8.0, sd=0.5)
    rng = np.random.default_rng(seed)
    stress = np.where(y == 0, 30.0, 70.0) + rng.normal(0, 1.0, size=y.size)
    return make_dataset(X), make_dataset(stress[:, None], names=VALIDATION, role=Role.VALIDATION), y


@lru_cache(maxsize=None)
def small_thesaurus(seed: int = 0, n_exemplars: int = 8):
    """A thesaurus over two blobs, built with a fast LIME config. Cached: treat as read-only."""
    schema = small_schema()
    train, valid, _ = blob_datasets(seed)
    config = ClusteringConfig(Algorithm.KMEANS, k=2, seed=seed, restarts=3)
    assignment = kmeans(train.values, config)
    validity = compute_validity(train.values, assignment.labels)
    profile = characterize_clusters(valid, assignment.labels, 0.05, ("active", "sedentary"))
    surrogate = train_linear(train.values, assignment.labels, SurrogateConfig(seed=seed), train.feature_names)
    summary = evaluate(surrogate, train.values, assignment.labels)
    ids = choose_exemplars(train, assignment.labels, n_exemplars, seed)
    normalization = NormalizationStats(
        mode="zscore",
        columns=TRAINING,
        offset=(5000.0, 420.0, 64.0),
        scale=(1000.0, 30.0, 5.0),
    )
    thesaurus = build_thesaurus(
        train,
        schema,
        "hourly_full",
        config,
        assignment,
        validity,
        profile,
        surrogate,
        summary,
        ids,
        normalization,
        lime_cfg=FAST_LIME,
        preamble="Test records from a wearable study.",
    )
    return thesaurus, train, schema
