import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from src.errors import DimensionMismatch, EmptyText, NoWords, TooFewCommonFeatures, ZeroGainVector
from src.explainers.types import FeatureImportanceVector
from src.llm.client import LlmConfig, StubMode, complete
from src.llm.parser import parse_response
from src.llm.prompt import ShotMode, build_prompt, exemplar_instance
from src.quality.content import content_vectors, euclidean_distance, ndcg_difference, spearman_rank
from src.quality.report import evaluate_quality, summarize_quality, write_quality_csv
from src.quality.structure import (
    ari_readability,
    coherence,
    grammar_error_count,
    load_lexicon,
    polarity,
    sentiment_consistency,
)
from tests.fixtures import small_thesaurus

GROUND = FeatureImportanceVector.from_arrays(["a", "b", "c", "d"], [0.4, -0.3, 0.2, 0.1], method="lime")


class TestStructure(unittest.TestCase):
    def test_readability(self):
        self.assertAlmostEqual(ari_readability("The cat sat."), -5.80, places=2)

    def test_readability_without_words(self):
        with self.assertRaises(NoWords):
            ari_readability("... !!")

    def test_grammar_heuristics(self):
        self.assertEqual(grammar_error_count("the the cat sat ."), 3)
        self.assertEqual(grammar_error_count("He said (hello."), 1)
        self.assertEqual(grammar_error_count("It's fine. She agreed."), 0)
        self.assertEqual(grammar_error_count(""), 0)

    def test_external_checker_adds_its_count(self):
        class TwoErrors:
            def count(self, text):
                return 2

        self.assertEqual(grammar_error_count("All good here.", TwoErrors()), 2)

    def test_coherence(self):
        self.assertAlmostEqual(coherence("steps and sleep", "steps and sleep"), 1.0)
        self.assertEqual(coherence("steps", "heart"), 0.0)
        with self.assertRaises(EmptyText):
            coherence("", "steps")

    def test_sentiment(self):
        lex = {"good": 1.0, "bad": -1.0}
        self.assertEqual(sentiment_consistency("a good day", "a bad day", lex), 2.0)
        self.assertEqual(polarity("nothing scored", lex), 0.0)

    def test_shipped_lexicon(self):
        version, words = load_lexicon()
        self.assertTrue(version)
        self.assertTrue(all(-1.0 <= v <= 1.0 for v in words.values()))

    def test_sentiment_consistency_is_symmetric(self):
        texts = ["Good sleep and a calm day.", "Poor sleep, stressful and tired.", "Steps were recorded."]
        for a in texts:
            self.assertEqual(sentiment_consistency(a, a), 0.0)
            for b in texts:
                self.assertEqual(sentiment_consistency(a, b), sentiment_consistency(b, a))


class TestContent(unittest.TestCase):
    def test_spearman(self):
        self.assertAlmostEqual(spearman_rank(GROUND, ["a", "c", "b", "d"]), 0.8)
        self.assertEqual(spearman_rank(GROUND, ["a", "b", "c", "d"]), 1.0)
        self.assertEqual(spearman_rank(GROUND, ["d", "c", "b", "a"]), -1.0)

    def test_spearman_needs_two_common_features(self):
        with self.assertRaises(TooFewCommonFeatures):
            spearman_rank(GROUND, ["a", "weight"])

    def test_ndcg_difference(self):
        ground = FeatureImportanceVector.from_arrays(["a", "b", "c"], [0.5, 0.3, 0.2], method="lime")
        self.assertAlmostEqual(ndcg_difference(ground, ["a", "b", "c"]), 0.0)
        self.assertAlmostEqual(ndcg_difference(ground, ["c", "b", "a"]), 0.19005, places=4)

    def test_ndcg_zero_gains(self):
        ground = FeatureImportanceVector.from_arrays(["a", "b"], [0.0, 0.0], method="lime")
        with self.assertRaises(ZeroGainVector):
            ndcg_difference(ground, ["a", "b"])

    def test_signed_reciprocal_vectors(self):
        v_ground, v_llm = content_vectors(GROUND, [("a", "+"), ("b", "+")])
        np.testing.assert_allclose(v_ground, [1.0, -0.5, 1 / 3, 0.25])
        np.testing.assert_allclose(v_llm, [1.0, 0.5, 0.0, 0.0])

    def test_euclidean(self):
        self.assertAlmostEqual(euclidean_distance([1.0, 0.0], [-1.0, 0.0]), 2.0)
        self.assertAlmostEqual(euclidean_distance([2.0, 0.0], [5.0, 0.0]), 0.0)
        with self.assertRaises(DimensionMismatch):
            euclidean_distance([1.0], [1.0, 0.0])

    def test_euclidean_triangle_inequality(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b, c = rng.standard_normal((3, 5))
            self.assertLessEqual(euclidean_distance(a, c), euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-12)
            self.assertAlmostEqual(euclidean_distance(a, b), euclidean_distance(b, a))

    def test_ndcg_ignores_the_scale_of_the_ground_weights(self):
        order = ["c", "a", "d", "b"]
        for factor in (0.01, 3.0, 1e4):
            scaled = FeatureImportanceVector.from_arrays(GROUND.feature_names, GROUND.weights * factor, method="lime")
            self.assertAlmostEqual(ndcg_difference(scaled, order), ndcg_difference(GROUND, order), places=12)
            self.assertEqual(spearman_rank(scaled, order), spearman_rank(GROUND, order))


class TestQualityReport(unittest.TestCase):
    def setUp(self):
        self.thesaurus, _, _ = small_thesaurus()

    def _report(self, exemplar, stub_mode):
        bundle = build_prompt(self.thesaurus, exemplar_instance(self.thesaurus, exemplar), ShotMode(), seed=0)
        completion = complete(LlmConfig(model_name="stub", stub_mode=stub_mode), bundle)
        parsed = parse_response(completion.text, bundle.feature_names)
        prompt_text = f"{bundle.system_text}\n\n{bundle.user_text}"
        return evaluate_quality(prompt_text, completion.text, parsed, bundle.reference, "stub", "zero-shot")

    def test_echo_is_a_perfect_ranking(self):
        report = self._report(self.thesaurus.exemplars[0], StubMode.ECHO)
        self.assertEqual(report.spearman, 1.0)
        self.assertAlmostEqual(report.ndcg_difference, 0.0)
        self.assertAlmostEqual(report.euclidean, 0.0)
        self.assertEqual(report.parse_path, "structured_block")
        self.assertEqual(report.missing_features, ())
        self.assertTrue(0.0 <= report.coherence <= 1.0)

    def test_reverse_ranks_worse_than_echo(self):
        e = self.thesaurus.exemplars[0]
        echo, rev = self._report(e, StubMode.ECHO), self._report(e, StubMode.REVERSE)
        self.assertEqual(rev.spearman, -1.0)
        self.assertGreater(rev.ndcg_difference, echo.ndcg_difference)

    def test_summary_groups_by_model_and_technique(self):
        reports = [self._report(e, StubMode.ECHO) for e in self.thesaurus.exemplars[:3]]
        reports.append(replace(reports[0], technique="one-shot", spearman=0.5))
        summary = summarize_quality(reports)
        self.assertEqual(summary["technique"].tolist(), ["zero-shot", "one-shot"])
        self.assertEqual(summary["n"].tolist(), [3, 1])
        self.assertAlmostEqual(summary["spearman"].iloc[1], 0.5)

    def test_quality_csv(self):
        reports = [self._report(self.thesaurus.exemplars[0], StubMode.ECHO)]
        with tempfile.TemporaryDirectory() as tmp:
            df = pd.read_csv(write_quality_csv(reports, Path(tmp) / "quality.csv"))
        self.assertEqual(len(df), 1)
        self.assertEqual(df["model"].iloc[0], "stub")


class TestShotModeTrend(unittest.TestCase):
    """The context stub copies shot rankings; the alphabetical stub ignores them."""

    AGREED = {"steps": 0.6, "sleep_duration": 0.3, "resting_heart_rate": 0.1}

    @classmethod
    def setUpClass(cls):
        base, _, _ = small_thesaurus(n_exemplars=20)
        exemplars = []
        for i, e in enumerate(base.exemplars):
            weights = dict(cls.AGREED)
            if i % 5 == 4:
                # the odd exemplar out ranks the features backwards
                weights = {"steps": 0.1, "sleep_duration": 0.3, "resting_heart_rate": 0.6}
            vector = FeatureImportanceVector.from_arrays(
                list(weights), list(weights.values()), method="lime", instance_id=e.instance_id
            )
            exemplars.append(replace(e, explanation=vector))
        cls.thesaurus = replace(base, exemplars=tuple(exemplars))
        cls.targets = [e for i, e in enumerate(exemplars) if i % 5 != 4]

    def _mean_spearman(self, stub_mode, mode, seeds=range(40)):
        scores = []
        for seed in seeds:
            for e in self.targets:
                bundle = build_prompt(self.thesaurus, exemplar_instance(self.thesaurus, e), mode, seed=seed)
                text = complete(LlmConfig(model_name="stub", stub_mode=stub_mode), bundle).text
                scores.append(spearman_rank(e.explanation, parse_response(text, bundle.feature_names)))
        return float(np.mean(scores))

    def test_context_stub_improves_with_more_shots(self):
        zero = self._mean_spearman(StubMode.CONTEXT, ShotMode.parse("zero"), seeds=[0])
        one = self._mean_spearman(StubMode.CONTEXT, ShotMode.parse("one"))
        few = self._mean_spearman(StubMode.CONTEXT, ShotMode.parse("few", 3))
        self.assertEqual(zero, -1.0)
        self.assertLess(zero, one)
        self.assertLess(one, few)

    def test_alphabetical_stub_does_not_move(self):
        zero = self._mean_spearman(StubMode.ALPHABETICAL, ShotMode.parse("zero"), seeds=[0])
        few = self._mean_spearman(StubMode.ALPHABETICAL, ShotMode.parse("few", 3), seeds=[0])
        self.assertEqual(zero, few)


if __name__ == "__main__":
    unittest.main()
