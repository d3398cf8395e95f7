import json
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd

from src.clustering.kmeans import kmeans
from src.clustering.models import Algorithm, ClusteringConfig
from src.errors import (
    ConfigError,
    CorruptFile,
    DegenerateInput,
    EmptyExemplarBank,
    FingerprintMismatch,
    MissingFile,
    NoSuccessfulRun,
    VersionMismatch,
)
from src.explainers.types import FeatureImportanceVector
from src.thesaurus.benchmark import (
    BenchmarkGrid,
    BenchmarkReport,
    BenchmarkRow,
    CellStatus,
    require_every_algorithm,
    rerun_without_outliers,
    run_benchmark,
    run_clustering,
    select_best,
    write_benchmark_csv,
)
from src.thesaurus.builder import build_thesaurus, choose_exemplars, verify_fingerprint
from src.thesaurus.store import load_thesaurus, render_document, save_thesaurus
from src.validity.indices import ValidityReport
from tests.fixtures import blob_datasets, make_dataset, small_thesaurus

GRID = BenchmarkGrid(algorithms=("kmeans", "dbscan", "hdbscan"), k_range=(2, 3, 4, 5), restarts=3, max_rows=200)


def _row(variant, silhouette, dbi, chi, status=CellStatus.OK):
    validity = ValidityReport(silhouette=silhouette, dbi=dbi, chi=chi, k=2)
    config = ClusteringConfig(Algorithm.KMEANS, k=2).to_dict()
    return BenchmarkRow(variant, "kmeans", status, config=config, validity=validity, k=2)


class TestBenchmark(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        train, _, _ = blob_datasets(0)
        cls.variants = {"hourly_full": train, "hourly_clean": train.select_columns(["steps"])}
        cls.report = run_benchmark(cls.variants, GRID, seed=11)

    def test_every_cell_is_reported(self):
        self.assertEqual(len(self.report.rows), 6)
        self.assertEqual(self.report.row("hourly_full", "hdbscan").status, CellStatus.SKIPPED)
        self.assertTrue(self.report.row("hourly_full", "kmeans").ok)
        self.assertIn("k", self.report.elbows["hourly_full"])

    def test_winner_has_the_best_silhouette(self):
        selection = select_best(self.report)
        best = max(r.index("silhouette") for r in self.report.ok_rows())
        self.assertEqual(selection.row.index("silhouette"), best)
        self.assertEqual(selection.to_dict()["criterion"], "silhouette")

    def test_same_seed_same_rows(self):
        again = run_benchmark(self.variants, GRID, seed=11, jobs=2)
        self.assertEqual([r.csv_record() for r in again.rows], [r.csv_record() for r in self.report.rows])

    def test_combinations(self):
        self.assertEqual(self.report.combinations(llm_cells=3)["total"], 6 + 4 + 3)

    def test_csv_layout(self):
        with tempfile.TemporaryDirectory() as tmp:
            p = write_benchmark_csv(self.report, Path(tmp) / "benchmark.csv")
            df = pd.read_csv(p)
        self.assertEqual(list(df.columns), ["variant", "algorithm", "silhouette", "dbi", "chi", "dunn", "pbm", "xie_beni", "k", "status"])
        skipped = df[df["algorithm"] == "hdbscan"]
        self.assertEqual(set(skipped["status"]), {"skipped"})
        self.assertTrue(skipped["k"].isna().all())

    def test_dbscan_cells_run(self):
        row = self.report.row("hourly_full", "dbscan")
        self.assertEqual(row.status, CellStatus.OK)
        self.assertGreater(row.config["eps"], 0.0)
        self.assertGreaterEqual(row.k, 2)
        self.assertEqual(self.report.algorithms_without_result(), [])
        require_every_algorithm(self.report)

    def test_no_variants(self):
        with self.assertRaises(ConfigError):
            run_benchmark({}, GRID)


class TestCellFailures(unittest.TestCase):
    def setUp(self):
        train, _, _ = blob_datasets(0)
        self.variants = {"hourly_full": train}
        self.grid = BenchmarkGrid(algorithms=("kmeans", "dbscan"), k_range=(2, 3, 4), restarts=2, max_rows=200)

    def _failing(self, algorithm, error):
        def run(X, cfg):
            if cfg.algorithm == algorithm:
                raise error
            return run_clustering(X, cfg)

        return patch("src.thesaurus.benchmark.run_clustering", side_effect=run)

    def test_domain_failure_is_recorded(self):
        with self._failing(Algorithm.DBSCAN, DegenerateInput("no density")):
            report = run_benchmark(self.variants, self.grid, seed=3)
        row = report.row("hourly_full", "dbscan")
        self.assertEqual(row.status, CellStatus.FAILED)
        self.assertIn("DegenerateInput", row.reason)
        self.assertEqual(row.csv_record()["status"], "failed")
        self.assertEqual(report.algorithms_without_result(), ["dbscan"])
        with self.assertRaises(NoSuccessfulRun):
            require_every_algorithm(report)
        self.assertEqual(select_best(report).row.algorithm, "kmeans")

    def test_unexpected_error_stops_the_run(self):
        with self._failing(Algorithm.DBSCAN, RuntimeError("bug")):
            with self.assertRaises(RuntimeError):
                run_benchmark(self.variants, self.grid, seed=3)


class TestSelection(unittest.TestCase):
    def test_ties_break_on_lower_dbi(self):
        report = BenchmarkReport(
            rows=(_row("a", 0.7, 0.5, 10.0), _row("b", 0.7, 0.3, 5.0), _row("c", 0.6, 0.1, 99.0)),
            seed=0,
            created_at="",
        )
        self.assertEqual(select_best(report).variant, "b")

    def test_minimized_criterion(self):
        report = BenchmarkReport(rows=(_row("a", 0.7, 0.5, 10.0), _row("c", 0.6, 0.1, 99.0)), seed=0, created_at="")
        self.assertEqual(select_best(report, "dbi").variant, "c")

    def test_no_successful_cell(self):
        report = BenchmarkReport(rows=(_row("a", None, None, None, CellStatus.FAILED),), seed=0, created_at="")
        with self.assertRaises(NoSuccessfulRun):
            select_best(report)

    def test_unknown_criterion(self):
        report = BenchmarkReport(rows=(_row("a", 0.7, 0.5, 10.0),), seed=0, created_at="")
        with self.assertRaises(ConfigError):
            select_best(report, "accuracy")


class TestRerunWithoutOutliers(unittest.TestCase):
    def test_outlier_row_is_dropped_before_reclustering(self):
        train, _, _ = blob_datasets(0)
        ds = make_dataset(np.vstack([train.values, [[100.0, 0.0, 0.0]]]))
        config = ClusteringConfig(Algorithm.KMEANS, k=2, seed=0)
        refined = rerun_without_outliers(ds, config, silhouette_before=0.5)
        self.assertGreaterEqual(refined.outliers.rows_removed, 1)
        self.assertNotIn(ds.n_rows - 1, refined.outliers.kept_rows)
        self.assertEqual(refined.assignment.labels.shape[0], refined.dataset.n_rows)
        self.assertEqual(refined.silhouette_before, 0.5)
        self.assertEqual(refined.to_dict()["k"], 2)


class TestThesaurus(unittest.TestCase):
    def setUp(self):
        self.thesaurus, self.train, self.schema = small_thesaurus()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_exemplars_carry_original_units_and_labels(self):
        self.assertEqual(len(self.thesaurus.exemplars), 8)
        e = self.thesaurus.exemplars[0]
        row = self.train.row_index(e.instance_id)
        self.assertAlmostEqual(e.feature_values()["steps"], 5000.0 + 1000.0 * self.train.values[row, 0])
        self.assertIn(e.cluster_label, ("active", "sedentary"))
        self.assertEqual(e.explanation.method, "lime")
        self.assertEqual(self.thesaurus.glossary["steps"], "number of steps walked")

    def test_exemplars_are_seeded_and_ordered(self):
        labels = np.repeat([0, 1], 20)
        ids = choose_exemplars(self.train, labels, 5, seed=3)
        self.assertEqual(ids, choose_exemplars(self.train, labels, 5, seed=3))
        self.assertEqual(ids, sorted(ids, key=self.train.row_index))

    def test_empty_bank(self):
        t = self.thesaurus
        with self.assertRaises(EmptyExemplarBank):
            build_thesaurus(
                self.train, self.schema, t.variant, t.clustering, _assignment(self.train), t.validity,
                t.profile, t.surrogate, t.surrogate_summary, [], t.normalization,
            )

    def test_save_and_load(self):
        p = save_thesaurus(self.thesaurus, self.tmp / "thesaurus.json")
        self.assertEqual(load_thesaurus(p), self.thesaurus)
        self.assertEqual(p.read_text(), render_document(self.thesaurus.to_dict(), "1"))

    def test_tampered_file(self):
        p = save_thesaurus(self.thesaurus, self.tmp / "thesaurus.json")
        doc = json.loads(p.read_text())
        doc["thesaurus"]["variant"] = "daily_full"
        p.write_text(json.dumps(doc, indent=2) + "\n")
        with self.assertRaises(CorruptFile):
            load_thesaurus(p)

    def test_not_json(self):
        p = self.tmp / "thesaurus.json"
        p.write_text("{not json")
        with self.assertRaises(CorruptFile):
            load_thesaurus(p)

    def test_future_version(self):
        p = self.tmp / "thesaurus.json"
        p.write_text(render_document(self.thesaurus.to_dict(), "99"))
        with self.assertRaises(VersionMismatch):
            load_thesaurus(p)

    def test_missing_file(self):
        with self.assertRaises(MissingFile):
            load_thesaurus(self.tmp / "absent.json")

    def test_fingerprint(self):
        verify_fingerprint(self.thesaurus, self.schema, self.train)
        with self.assertRaises(FingerprintMismatch):
            verify_fingerprint(self.thesaurus, self.schema, self.train.select_rows(range(10)))

    def test_randomized_thesauri_round_trip(self):
        rng = np.random.default_rng(17)
        words = ["sleep", "steps", "heart", "calm", "active", "récupération", "day"]
        for i in range(50):
            t = _randomized(self.thesaurus, rng, words)
            p = save_thesaurus(t, self.tmp / f"t{i}.json")
            self.assertEqual(load_thesaurus(p), t)

    def test_every_flipped_byte_is_detected(self):
        rng = np.random.default_rng(23)
        for i in range(50):
            p = save_thesaurus(_randomized(self.thesaurus, rng, ["a", "b"]), self.tmp / f"c{i}.json")
            data = bytearray(p.read_bytes())
            pos = int(rng.integers(len(data)))
            data[pos] ^= 0x01
            p.write_bytes(bytes(data))
            with self.assertRaises(CorruptFile, msg=f"byte {pos}"):
                load_thesaurus(p)


def _randomized(t, rng, words):
    exemplars = []
    for e in t.exemplars:
        weights = rng.normal(0.0, rng.uniform(0.01, 10.0), size=len(e.explanation.weights))
        explanation = FeatureImportanceVector.from_arrays(
            e.explanation.feature_names, weights, method="lime", instance_id=e.instance_id
        )
        features = tuple((name, float(v * rng.uniform(-3.0, 3.0))) for name, v in e.features)
        exemplars.append(
            replace(e, features=features, explanation=explanation, fidelity=float(rng.uniform()), cluster=int(rng.integers(3)))
        )
    return replace(
        t,
        exemplars=tuple(exemplars),
        preamble=" ".join(rng.choice(words, size=int(rng.integers(1, 12)))),
        glossary={name: str(rng.choice(words)) for name in t.feature_names},
        refinement={"iqr_factor": float(rng.uniform(1.0, 3.0)), "rows_removed": int(rng.integers(10))},
    )


def _assignment(ds):
    return kmeans(ds.values, ClusteringConfig(Algorithm.KMEANS, k=2, seed=0))


if __name__ == "__main__":
    unittest.main()
