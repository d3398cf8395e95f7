"""Clustering benchmark over (variant, algorithm) cells, winner selection and the IQR re-run."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from src.clustering.dbscan import dbscan
from src.clustering.fuzzy import fuzzy_cmeans
from src.clustering.kmeans import kmeans
from src.clustering.models import (
    PARAMETRIC,
    RESERVED_ALGORITHMS,
    Algorithm,
    Assignment,
    ClusteringConfig,
)
from src.clustering.selection import ElbowResult, default_eps_grid, elbow_select_k, grid_search_dbscan
from src.clustering.spectral import spectral
from src.data.preprocess import OutlierReport, remove_outliers_iqr
from src.data.schema import Dataset
from src.errors import ConfigError, NoSuccessfulRun, XaiGapError
from src.utils.random_utils import derive_seed
from src.validity.indices import INDEX_NAMES, ValidityReport, compute_validity, format_index


DEFAULT_ALGORITHMS = ("kmeans", "fuzzy_cmeans", "dbscan", "spectral")
DEFAULT_K_RANGE = (2, 3, 4, 5, 6, 7, 8)
DEFAULT_MIN_SAMPLES = (3, 5, 10)
CSV_COLUMNS = ["variant", "algorithm", *INDEX_NAMES, "k", "status"]

MAXIMIZE = ("silhouette", "chi", "dunn", "pbm")
MINIMIZE = ("dbi", "xie_beni")


class CellStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class BenchmarkGrid:
    algorithms: tuple[str, ...] = DEFAULT_ALGORITHMS
    k_range: tuple[int, ...] = DEFAULT_K_RANGE
    eps_grid: Optional[tuple[float, ...]] = None
    min_samples_grid: tuple[int, ...] = DEFAULT_MIN_SAMPLES
    restarts: int = 10
    max_rows: int = 2000

    @classmethod
    def from_dict(cls, d: Optional[Mapping]) -> "BenchmarkGrid":
        d = d or {}
        eps = d.get("eps_grid")
        return cls(
            algorithms=tuple(str(a) for a in d.get("algorithms", DEFAULT_ALGORITHMS)),
            k_range=tuple(int(k) for k in d.get("k_range", DEFAULT_K_RANGE)),
            eps_grid=tuple(float(e) for e in eps) if eps else None,
            min_samples_grid=tuple(int(m) for m in d.get("min_samples_grid", DEFAULT_MIN_SAMPLES)),
            restarts=int(d.get("restarts", 10)),
            max_rows=int(d.get("max_rows", 2000)),
        )


@dataclass(frozen=True)
class BenchmarkRow:
    variant: str
    algorithm: str
    status: CellStatus
    config: Optional[dict] = None
    validity: Optional[ValidityReport] = None
    k: Optional[int] = None
    wall_time: float = 0.0
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == CellStatus.OK

    def index(self, name: str) -> Optional[float]:
        return self.validity.get(name) if self.validity is not None else None

    def csv_record(self) -> dict:
        rec = {"variant": self.variant, "algorithm": self.algorithm}
        for name in INDEX_NAMES:
            rec[name] = format_index(self.index(name))
        rec["k"] = self.k
        rec["status"] = self.status.value
        return rec

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "algorithm": self.algorithm,
            "status": self.status.value,
            "config": self.config,
            "validity": self.validity.to_dict() if self.validity is not None else None,
            "k": self.k,
            "wall_time": round(self.wall_time, 4),
            "reason": self.reason,
        }


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple[BenchmarkRow, ...]
    seed: int
    created_at: str
    elbows: dict = field(default_factory=dict)

    def ok_rows(self) -> list[BenchmarkRow]:
        return [r for r in self.rows if r.ok]

    def row(self, variant: str, algorithm: str) -> BenchmarkRow:
        for r in self.rows:
            if r.variant == variant and r.algorithm == algorithm:
                return r
        raise KeyError(f"{variant}/{algorithm}")

    def algorithms_without_result(self) -> list[str]:
        """Implemented algorithms that have no ok cell on any variant, in grid order."""
        seen = dict.fromkeys(r.algorithm for r in self.rows if r.algorithm not in RESERVED_ALGORITHMS)
        return [a for a in seen if not any(r.ok for r in self.rows if r.algorithm == a)]

    def combinations(self, xai_methods: int = 4, llm_cells: int = 0) -> dict:
        """Accounting of evaluated combinations: clustering cells + XAI methods + LLM cells."""
        cells = len(self.rows)
        return {
            "clustering_cells": cells,
            "xai_methods": xai_methods,
            "llm_cells": llm_cells,
            "total": cells + xai_methods + llm_cells,
        }

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "created_at": self.created_at,
            "elbows": self.elbows,
            "rows": [r.to_dict() for r in self.rows],
        }


def run_clustering(X, cfg: ClusteringConfig) -> Assignment:
    """Dispatch one configuration; fuzzy results come back hardened with membership in meta."""
    if cfg.algorithm == Algorithm.KMEANS:
        return kmeans(X, cfg)
    if cfg.algorithm == Algorithm.FUZZY_CMEANS:
        return fuzzy_cmeans(X, cfg).to_assignment()
    if cfg.algorithm == Algorithm.DBSCAN:
        return dbscan(X, cfg)
    if cfg.algorithm == Algorithm.SPECTRAL:
        return spectral(X, cfg)
    raise ConfigError(f"Unsupported algorithm: {cfg.algorithm}")


def validity_of(X, assignment: Assignment, max_rows: Optional[int], seed: int) -> ValidityReport:
    membership = assignment.meta.get("membership")
    centers = assignment.centroids if membership is not None else None
    return compute_validity(X, assignment.labels, membership=membership, centers=centers, max_rows=max_rows, seed=seed)


def _elbow(variant: str, X: np.ndarray, grid: BenchmarkGrid, seed: int) -> ElbowResult | Exception:
    try:
        return elbow_select_k(
            X,
            grid.k_range,
            seed=derive_seed(seed, variant, "elbow"),
            restarts=grid.restarts,
            silhouette_rows=grid.max_rows,
        )
    except Exception as e:
        logger.error(f"Elbow failed: variant={variant} error={type(e).__name__}: {e}")
        return e


def _run_cell(
    variant: str,
    X: np.ndarray,
    algorithm: str,
    grid: BenchmarkGrid,
    seed: int,
    elbow: ElbowResult | Exception | None,
) -> BenchmarkRow:
    start = time.perf_counter()
    if algorithm in RESERVED_ALGORITHMS:
        return BenchmarkRow(variant, algorithm, CellStatus.SKIPPED, reason="not implemented")

    cell_seed = derive_seed(seed, variant, algorithm)
    try:
        algo = Algorithm(algorithm)
        if algo == Algorithm.DBSCAN:
            eps_grid = grid.eps_grid or sorted(
                {e for ms in grid.min_samples_grid for e in default_eps_grid(X, min_samples=ms)}
            )
            search = grid_search_dbscan(X, eps_grid, grid.min_samples_grid, silhouette_rows=grid.max_rows, seed=cell_seed)
            cfg = ClusteringConfig(
                algo, eps=search.eps, min_samples=search.min_samples, seed=cell_seed, max_rows=grid.max_rows
            )
        else:
            if isinstance(elbow, Exception):
                raise elbow
            cfg = ClusteringConfig(algo, k=elbow.k, seed=cell_seed, restarts=grid.restarts, max_rows=grid.max_rows)
        assignment = run_clustering(X, cfg)
        validity = validity_of(X, assignment, grid.max_rows, cell_seed)
    except XaiGapError as e:
        logger.error(f"Benchmark cell failed: variant={variant} algorithm={algorithm} error={type(e).__name__}: {e}")
        return BenchmarkRow(
            variant, algorithm, CellStatus.FAILED, wall_time=time.perf_counter() - start, reason=f"{type(e).__name__}: {e}"
        )
    except Exception:
        logger.exception(f"Benchmark cell crashed: variant={variant} algorithm={algorithm}")
        raise

    row = BenchmarkRow(
        variant,
        algorithm,
        CellStatus.OK,
        config=cfg.to_dict(),
        validity=validity,
        k=assignment.k,
        wall_time=time.perf_counter() - start,
    )
    logger.info(
        f"Benchmark cell done: variant={variant} algorithm={algorithm} k={row.k} "
        f"silhouette={format_index(validity.silhouette)}"
    )
    return row


def run_benchmark(
    variants: Mapping[str, Dataset],
    grid: BenchmarkGrid = BenchmarkGrid(),
    seed: int = 0,
    jobs: int = 1,
) -> BenchmarkReport:
    if not variants:
        raise ConfigError("Benchmark needs at least one variant")
    if not grid.algorithms:
        raise ConfigError("Benchmark needs at least one algorithm")

    matrices = {name: ds.values for name, ds in variants.items()}
    needs_elbow = any(a in {p.value for p in PARAMETRIC} for a in grid.algorithms)
    workers = max(1, int(jobs))
    logger.info(
        f"Benchmark start: variants={len(matrices)} algorithms={list(grid.algorithms)} seed={seed} jobs={workers}"
    )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        elbows: dict[str, ElbowResult | Exception | None] = {name: None for name in matrices}
        if needs_elbow:
            futures = {name: pool.submit(_elbow, name, X, grid, seed) for name, X in matrices.items()}
            elbows = {name: f.result() for name, f in futures.items()}

        cells = [(name, algo) for name in matrices for algo in grid.algorithms]
        futures = [pool.submit(_run_cell, name, matrices[name], algo, grid, seed, elbows[name]) for name, algo in cells]
        rows = tuple(f.result() for f in futures)

    report = BenchmarkReport(
        rows=rows,
        seed=int(seed),
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        elbows={
            name: (e.to_dict() if isinstance(e, ElbowResult) else {"error": str(e)} if e is not None else None)
            for name, e in elbows.items()
        },
    )
    counts = {s.value: sum(r.status == s for r in rows) for s in CellStatus}
    logger.info(f"Benchmark done: cells={len(rows)} ok={counts['ok']} failed={counts['failed']} skipped={counts['skipped']}")
    return report


def require_every_algorithm(report: BenchmarkReport) -> None:
    """Raise NoSuccessfulRun naming each implemented algorithm that failed on every variant."""
    missing = report.algorithms_without_result()
    if not missing:
        return
    reasons = {
        a: sorted({r.reason for r in report.rows if r.algorithm == a and r.reason}) for a in missing
    }
    raise NoSuccessfulRun(f"No ok benchmark cell for algorithms {missing}: {reasons}")


def write_benchmark_csv(report: BenchmarkReport, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([r.csv_record() for r in report.rows], columns=CSV_COLUMNS)
    frame["k"] = frame["k"].astype("Int64")
    frame.to_csv(p, index=False, lineterminator="\n")
    return p


@dataclass(frozen=True)
class Selection:
    variant: str
    config: ClusteringConfig
    row: BenchmarkRow
    criterion: str
    rationale: str

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "config": self.config.to_dict(),
            "criterion": self.criterion,
            "value": format_index(self.row.index(self.criterion)),
            "silhouette": format_index(self.row.index("silhouette")),
            "k": self.row.k,
            "rationale": self.rationale,
        }


def _direction(criterion: str) -> float:
    if criterion in MAXIMIZE:
        return 1.0
    if criterion in MINIMIZE:
        return -1.0
    raise ConfigError(f"Unknown selection criterion {criterion!r}; expected one of {list(INDEX_NAMES)}")


def select_best(report: BenchmarkReport, criterion: str = "silhouette") -> Selection:
    """Best ok row by `criterion`; ties go to lower DBI, then higher CHI, then grid order."""
    sign = _direction(criterion)
    candidates = [(i, r) for i, r in enumerate(report.rows) if r.ok and r.index(criterion) is not None]
    if not candidates:
        raise NoSuccessfulRun(f"No successful benchmark cell has a {criterion} value")

    def key(item):
        i, r = item
        dbi = r.index("dbi")
        chi = r.index("chi")
        return (
            -sign * r.index(criterion),
            np.inf if dbi is None else dbi,
            np.inf if chi is None else -chi,
            i,
        )

    _, best = min(candidates, key=key)
    direction = "max" if sign > 0 else "min"
    rationale = (
        f"{direction} {criterion}={format_index(best.index(criterion))} over {len(candidates)} ok cells; "
        "ties by lower dbi, then higher chi, then grid order"
    )
    logger.info(f"Winner: variant={best.variant} algorithm={best.algorithm} k={best.k} ({rationale})")
    return Selection(
        variant=best.variant,
        config=ClusteringConfig.from_dict(best.config),
        row=best,
        criterion=criterion,
        rationale=rationale,
    )


@dataclass(frozen=True, eq=False)
class RefinedAssignment:
    dataset: Dataset
    assignment: Assignment
    validity: ValidityReport
    outliers: OutlierReport
    silhouette_before: Optional[float]
    silhouette_after: Optional[float]

    def to_dict(self) -> dict:
        return {
            "outliers": self.outliers.to_dict(),
            "silhouette_before": format_index(self.silhouette_before),
            "silhouette_after": format_index(self.silhouette_after),
            "validity": self.validity.to_dict(),
            "k": self.assignment.k,
        }


def rerun_without_outliers(
    dataset: Dataset,
    config: ClusteringConfig,
    factor: float = 1.5,
    silhouette_before: Optional[float] = None,
) -> RefinedAssignment:
    """IQR screening on the winning variant followed by a re-run of the winning configuration."""
    filtered, outliers = remove_outliers_iqr(dataset, factor)
    assignment = run_clustering(filtered.values, config)
    validity = validity_of(filtered.values, assignment, config.max_rows, config.seed)
    before = silhouette_before
    logger.info(
        f"Re-run without outliers: removed={outliers.rows_removed} "
        f"silhouette {format_index(before)} -> {format_index(validity.silhouette)}"
    )
    return RefinedAssignment(
        dataset=filtered,
        assignment=assignment,
        validity=validity,
        outliers=outliers,
        silhouette_before=before,
        silhouette_after=validity.silhouette,
    )
