import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from src.errors import ConfigError, TargetIsCurrentClass, UnknownClass, UnknownFeature
from src.explainers.anchors import AnchorSampler, AnchorsConfig, anchor_coverage, anchors_explain
from src.explainers.coefficients import coefficients_explain
from src.explainers.counterfactual import counterfactual_search, cf_proximity, cf_sparsity
from src.explainers.lime import TrainingStats, lime_explain, lime_explain_detailed
from src.explainers.summary import XaiQualitySummary, summarize_xai_quality, write_importance_csv
from src.explainers.types import FeatureImportanceVector, LimeConfig, Predicate
from src.surrogate.linear import SurrogateBlackBox, SurrogateConfig, predict, train_linear
from tests.fixtures import FAST_LIME, TRAINING, blob_datasets


class ExplainerTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        train, _, y = blob_datasets(0)
        cls.X = train.values
        cls.y = y
        cls.model = train_linear(cls.X, y, SurrogateConfig(seed=0), TRAINING)
        cls.black_box = SurrogateBlackBox(cls.model)
        cls.ranges = cls.X.max(axis=0) - cls.X.min(axis=0)


class TestImportanceVector(unittest.TestCase):
    def test_ranked_by_magnitude(self):
        v = FeatureImportanceVector.from_arrays(["a", "b", "c"], [0.1, -0.5, 0.1], method="lime")
        self.assertEqual([n for n, _ in v.ranked()], ["b", "a", "c"])
        self.assertEqual(v.weight_of("b"), -0.5)
        self.assertEqual(FeatureImportanceVector.from_dict(v.to_dict()), v)

    def test_duplicate_names(self):
        with self.assertRaises(UnknownFeature):
            FeatureImportanceVector.from_arrays(["a", "a"], [1.0, 2.0], method="lime")

    def test_unknown_feature(self):
        v = FeatureImportanceVector.from_arrays(["a"], [1.0], method="lime")
        with self.assertRaises(UnknownFeature):
            v.weight_of("z")


class TestCoefficients(ExplainerTestCase):
    def test_weight_row_of_the_class(self):
        v = coefficients_explain(self.model, 1)
        self.assertEqual(v.feature_names, list(TRAINING))
        np.testing.assert_allclose(v.weights, self.model.weights[1])
        self.assertEqual(v.instance_id, "global")
        self.assertEqual(v.meta["class"], 1)
        self.assertEqual(v.ranked()[0][0], "steps")

    def test_unknown_class(self):
        with self.assertRaises(UnknownClass):
            coefficients_explain(self.model, 7)


class TestLime(ExplainerTestCase):
    def test_same_seed_same_vector(self):
        stats = TrainingStats.from_matrix(self.X, TRAINING)
        a = lime_explain(self.black_box, self.X[0], stats, FAST_LIME, instance_id="p00@0")
        b = lime_explain(self.black_box, self.X[0], stats, FAST_LIME, instance_id="p00@0")
        self.assertEqual(a, b)
        self.assertEqual(a.meta["target"], 0)

    def test_separating_feature_dominates(self):
        stats = TrainingStats.from_matrix(self.X, TRAINING)
        res = lime_explain_detailed(self.black_box, self.X[0], stats, FAST_LIME)
        self.assertEqual(res.vector.ranked()[0][0], "steps")
        self.assertEqual(res.perturbations.shape, (400, 3))
        self.assertTrue(0.0 <= res.fidelity <= 1.0)
        self.assertTrue(np.all(res.weights > 0))

    def test_too_few_samples(self):
        stats = TrainingStats.from_matrix(self.X, TRAINING)
        with self.assertRaises(ConfigError):
            lime_explain(self.black_box, self.X[0], stats, LimeConfig(n_samples=20))


def _logistic_oracle(Z):
    p = 1.0 / (1.0 + np.exp(-(3.0 * Z[:, 0] - 2.0 * Z[:, 1] + 0.0 * Z[:, 2])))
    return np.column_stack([1.0 - p, p])


class TestLimeOnLogisticOracle(unittest.TestCase):
    names = ("x1", "x2", "x3")

    def _explain(self, seed: int, std: float):
        x = 0.5 * np.random.default_rng(seed).standard_normal(3)
        stats = TrainingStats(mean=np.zeros(3), std=np.full(3, std), feature_names=self.names)
        return lime_explain_detailed(_logistic_oracle, x, stats, LimeConfig(n_samples=5000, seed=seed))

    def test_ranking_and_fidelity_with_a_narrow_neighbourhood(self):
        exact = 0
        for seed in range(20):
            res = self._explain(seed, std=0.1)
            w = res.vector.weights
            rho = spearmanr(np.abs(w), [3.0, 2.0, 0.0])[0]
            exact += rho > 1.0 - 1e-12
            sign = 1.0 if res.local_model.target == 1 else -1.0
            self.assertGreater(sign * w[0], 0.0)
            self.assertLess(sign * w[1], 0.0)
            self.assertLess(abs(w[2]), 0.05 * np.max(np.abs(w)))
            self.assertGreaterEqual(res.fidelity, 0.99, f"seed={seed}")
        self.assertGreaterEqual(exact, 19)

    def test_unit_scale_still_agrees_mostly(self):
        fidelities = [self._explain(seed, std=1.0).fidelity for seed in range(20)]
        self.assertGreaterEqual(float(np.mean(fidelities)), 0.9)

    def test_reordering_features_reorders_the_weights(self):
        x = np.array([0.3, -0.2, 0.8])
        stats = TrainingStats(mean=np.zeros(3), std=np.ones(3), feature_names=self.names)
        perm = [2, 0, 1]
        back = np.argsort(perm)
        moved = TrainingStats(mean=np.zeros(3), std=np.ones(3), feature_names=tuple(self.names[j] for j in perm))

        def moved_oracle(Z):
            return _logistic_oracle(Z[:, back])

        cfg = LimeConfig(n_samples=2000, seed=4)
        a = lime_explain_detailed(_logistic_oracle, x, stats, cfg)
        b = lime_explain_detailed(moved_oracle, x[perm], moved, cfg)
        for name in self.names:
            self.assertAlmostEqual(a.vector.weight_of(name), b.vector.weight_of(name), places=9)
        self.assertAlmostEqual(a.fidelity, b.fidelity, places=9)


class TestAnchors(ExplainerTestCase):
    def test_predicate_bounds(self):
        p = Predicate("steps", 0, 1, lower=1.0, upper=2.0)
        self.assertEqual(p.holds(np.array([1.0, 1.5, 2.0])).tolist(), [False, True, True])
        self.assertEqual(p.describe(), "1 < steps <= 2")
        self.assertEqual(Predicate("steps", 0, 0, -np.inf, 2.0).describe(), "steps <= 2")

    def test_anchor_on_the_separating_feature(self):
        sampler = AnchorSampler(self.X, TRAINING)
        rule = anchors_explain(self.black_box, self.X[0], sampler, AnchorsConfig(n_mc=1000, seed=3))
        self.assertTrue(rule.meets_threshold)
        self.assertGreaterEqual(rule.precision, 0.95)
        self.assertIn("steps", [p.feature for p in rule.predicates])
        self.assertTrue(rule.satisfied(self.X[:1])[0])
        self.assertGreater(rule.coverage, 0.0)
        self.assertLessEqual(rule.coverage, 0.5)
        self.assertAlmostEqual(anchor_coverage(rule, self.X), rule.coverage)

    def test_precision_holds_on_a_fresh_sample(self):
        sampler = AnchorSampler(self.X, TRAINING)
        cfg = AnchorsConfig(n_mc=1000, seed=3)
        for row in (0, 20, 39):
            rule = anchors_explain(self.black_box, self.X[row], sampler, cfg)
            self.assertTrue(rule.meets_threshold)
            fresh = sampler.sample(rule.predicates, 100_000, np.random.default_rng(9000 + row))
            precision = float(np.mean(np.argmax(self.black_box(fresh), axis=1) == rule.target_class))
            self.assertGreaterEqual(precision, cfg.precision_threshold - 0.02)


class TestAnchorsOnThresholdOracle(unittest.TestCase):
    @staticmethod
    def oracle(Z):
        hit = (Z[:, 0] > 0).astype("float64")
        return np.column_stack([1.0 - hit, hit])

    def test_anchors_only_the_first_feature_bin(self):
        train = np.random.default_rng(5).standard_normal((4000, 2))
        sampler = AnchorSampler(train, ["x1", "x2"])
        rule = anchors_explain(self.oracle, np.array([1.0, 0.0]), sampler, AnchorsConfig(n_mc=2000, seed=1))
        self.assertEqual([p.feature for p in rule.predicates], ["x1"])
        self.assertEqual(rule.predicates[0].bin, 3)
        self.assertGreaterEqual(rule.precision, 0.95)
        self.assertAlmostEqual(rule.coverage, 0.25, delta=0.05)
        fresh = sampler.sample(rule.predicates, 100_000, np.random.default_rng(11))
        self.assertGreaterEqual(float(np.mean(self.oracle(fresh)[:, 1] == 1.0)), 0.93)


class TestCounterfactual(ExplainerTestCase):
    def test_proximity_and_sparsity(self):
        self.assertAlmostEqual(cf_proximity([0.0, 0.0], [1.0, 0.0], [2.0, 4.0]), 0.25)
        self.assertEqual(cf_sparsity([0.0, 0.0], [1.0, 0.0]), 1)

    def test_zero_range_uses_raw_difference(self):
        self.assertAlmostEqual(cf_proximity([0.0, 0.0], [1.0, 0.0], [0.0, 4.0]), 0.5)

    def test_gradient_search_flips_the_class(self):
        x = self.X[0]
        cf = counterfactual_search(self.black_box, x, 1, self.ranges, feature_names=TRAINING)
        self.assertEqual(int(predict(self.model, cf.counterfactual)[0]), 1)
        self.assertIn("steps", cf.changed_features(TRAINING))
        self.assertAlmostEqual(cf.proximity, cf_proximity(x, cf.counterfactual, self.ranges))
        self.assertEqual(cf.sparsity, cf_sparsity(x, cf.counterfactual))

    def test_coordinate_search_without_gradient(self):
        def plain(Z):
            return self.black_box(Z)

        cf = counterfactual_search(plain, self.X[0], 1, self.ranges, feature_names=TRAINING)
        self.assertEqual(int(predict(self.model, cf.counterfactual)[0]), 1)

    def test_target_already_predicted(self):
        with self.assertRaises(TargetIsCurrentClass):
            counterfactual_search(self.black_box, self.X[0], 0, self.ranges)

    def test_sparsity_matches_a_recount(self):
        rows = [i for i in range(len(self.X)) if int(predict(self.model, self.X[i])[0]) == 0][:10]
        self.assertTrue(rows)
        for i in rows:
            x = self.X[i]
            cf = counterfactual_search(self.black_box, x, 1, self.ranges, feature_names=TRAINING)
            self.assertEqual(int(predict(self.model, cf.counterfactual)[0]), 1)
            recount = sum(1 for a, b in zip(x, cf.counterfactual) if a != b)
            self.assertEqual(cf.sparsity, recount)
            self.assertLessEqual(cf.sparsity, len(TRAINING))
            self.assertLessEqual(cf.proximity, 1.0)


class _IgnoresSecondFeature:
    """P(class 1) depends on x0 only; the gradient also points along x1."""

    def __call__(self, Z):
        Z = np.atleast_2d(Z)
        p = 1.0 / (1.0 + np.exp(-4.0 * (Z[:, 0] - 0.5)))
        return np.column_stack([1.0 - p, p])

    def gradient(self, x, class_index: int) -> np.ndarray:
        p = self(x)[0, 1]
        g = 4.0 * p * (1.0 - p)
        return np.array([g, g]) if class_index == 1 else np.array([-g, -g])


class TestCounterfactualSparsityPass(unittest.TestCase):
    def test_change_to_the_ignored_feature_is_reverted(self):
        x = np.array([-0.5, 0.2])
        cf = counterfactual_search(_IgnoresSecondFeature(), x, 1, [2.0, 2.0], feature_names=["x0", "x1"])
        self.assertGreater(cf.counterfactual[0], 0.5)
        self.assertEqual(cf.counterfactual[1], x[1])
        self.assertEqual(cf.sparsity, 1)
        self.assertEqual(cf.changed_features(["x0", "x1"]), ["x0"])


class TestSummary(ExplainerTestCase):
    def test_summary_over_two_rows(self):
        summary = summarize_xai_quality(
            self.model,
            self.X,
            self.y,
            rows=[0, 25],
            feature_names=TRAINING,
            lime_cfg=FAST_LIME,
            anchors_cfg=AnchorsConfig(n_mc=500),
            seed=1,
        )
        self.assertEqual(summary.n_instances, 2)
        self.assertEqual(summary.coefficients_accuracy, 1.0)
        self.assertEqual(summary.cf_not_found, 0)
        self.assertTrue(0.0 <= summary.lime_fidelity <= 1.0)
        self.assertEqual(XaiQualitySummary.from_dict(summary.to_dict()), summary)

    def test_importance_csv(self):
        vectors = [coefficients_explain(self.model, 0), coefficients_explain(self.model, 1)]
        with tempfile.TemporaryDirectory() as tmp:
            p = write_importance_csv(vectors, Path(tmp) / "out" / "importance.csv")
            df = pd.read_csv(p)
        self.assertEqual(list(df.columns), ["instance_id", "method", "feature", "weight"])
        self.assertEqual(len(df), 6)
        self.assertEqual(set(df["method"]), {"coefficients"})


if __name__ == "__main__":
    unittest.main()
