import unittest

import numpy as np
from scipy.stats import mannwhitneyu

from src.data.schema import Role
from src.errors import CoincidentCenters, EmptySample, RowMismatch, TooFewClusters
from src.validity.indices import (
    INDEX_NAMES,
    ValidityReport,
    calinski_harabasz,
    compute_validity,
    davies_bouldin,
    dunn,
    format_index,
    pbm,
    silhouette,
    xie_beni,
)
from src.validity.profile import ClusterProfile, characterize_clusters
from src.validity.stats import mann_whitney_u
from tests.fixtures import make_dataset

X = np.array([[0.0], [1.0], [10.0], [11.0]])
LABELS = np.array([0, 0, 1, 1])


class TestIndices(unittest.TestCase):
    def test_reference_values(self):
        self.assertAlmostEqual(silhouette(X, LABELS), 0.8997493734, places=8)
        self.assertAlmostEqual(davies_bouldin(X, LABELS), 0.1)
        self.assertAlmostEqual(calinski_harabasz(X, LABELS), 200.0)
        self.assertAlmostEqual(dunn(X, LABELS), 9.0)
        self.assertAlmostEqual(pbm(X, LABELS), 2500.0)
        self.assertAlmostEqual(xie_beni(X, LABELS), 0.0025)

    def test_noise_rows_are_ignored(self):
        Xn = np.vstack([X, [[100.0]]])
        labels = np.append(LABELS, -1)
        self.assertAlmostEqual(davies_bouldin(Xn, labels), 0.1)

    def test_single_cluster(self):
        with self.assertRaises(TooFewClusters):
            silhouette(X, np.zeros(4, dtype=int))

    def test_zero_spread_is_unbounded(self):
        Xd = np.array([[0.0], [0.0], [5.0], [5.0]])
        self.assertEqual(dunn(Xd, LABELS), float("inf"))
        self.assertEqual(format_index(dunn(Xd, LABELS)), "unbounded")

    def test_coincident_fuzzy_centers(self):
        u = np.full((4, 2), 0.5)
        with self.assertRaises(CoincidentCenters):
            xie_beni(X, u, centers=np.array([[5.0], [5.0]]))

    def test_report_collects_failures_as_notes(self):
        report = compute_validity(X, np.array([0, 0, 0, -1]))
        self.assertIsNone(report.silhouette)
        self.assertTrue(any(n.startswith("silhouette") for n in report.notes))

    def test_report_dict_form(self):
        report = compute_validity(X, LABELS)
        self.assertEqual(report.k, 2)
        self.assertEqual(ValidityReport.from_dict(report.to_dict()), report)

    def test_invariant_under_row_order_and_rigid_motion(self):
        rng = np.random.default_rng(8)
        centers = np.array([[0.0, 0.0, 0.0], [6.0, 0.0, 1.0], [0.0, 7.0, -2.0]])
        labels = np.repeat([0, 1, 2], 12)
        Xb = centers[labels] + rng.normal(0.0, 0.8, size=(36, 3))
        base = compute_validity(Xb, labels)

        order = rng.permutation(36)
        rotation, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        moved = {
            "permuted": (Xb[order], labels[order]),
            "translated": (Xb + np.array([40.0, -3.0, 11.0]), labels),
            "rotated": (Xb @ rotation.T, labels),
            "relabelled": (Xb, (labels + 1) % 3),
        }
        for name, (Xm, lm) in moved.items():
            report = compute_validity(Xm, lm)
            for index in INDEX_NAMES:
                expected = base.get(index)
                self.assertAlmostEqual(report.get(index), expected, delta=1e-9 * abs(expected), msg=f"{name} {index}")


class TestMannWhitney(unittest.TestCase):
    def test_exact_small_sample(self):
        res = mann_whitney_u([1.0, 2.0], [3.0, 4.0])
        self.assertEqual(res.u, 0.0)
        self.assertAlmostEqual(res.p_value, 1.0 / 3.0)
        self.assertEqual(res.method, "exact")

    def test_ties_use_midranks(self):
        res = mann_whitney_u([1.0, 2.0], [2.0, 3.0])
        self.assertEqual(res.u, 0.5)

    def test_large_samples_use_the_normal_approximation(self):
        rng = np.random.default_rng(0)
        res = mann_whitney_u(rng.normal(0, 1, 30), rng.normal(3, 1, 30))
        self.assertEqual(res.method, "asymptotic")
        self.assertLess(res.p_value, 1e-6)

    def test_empty_sample(self):
        with self.assertRaises(EmptySample):
            mann_whitney_u([], [1.0])

    def test_exact_p_matches_scipy_for_every_small_design(self):
        rng = np.random.default_rng(12)
        for n_a in range(1, 12):
            for n_b in range(1, 13 - n_a):
                a, b = rng.normal(0.0, 1.0, n_a), rng.normal(0.7, 1.0, n_b)
                ours = mann_whitney_u(a, b)
                ref = mannwhitneyu(a, b, alternative="two-sided", method="exact")
                self.assertEqual(ours.method, "exact")
                self.assertEqual(ours.u, ref.statistic)
                self.assertAlmostEqual(ours.p_value, ref.pvalue, places=12, msg=f"n_a={n_a} n_b={n_b}")

    def test_u_statistics_sum_to_the_pair_count(self):
        rng = np.random.default_rng(13)
        for _ in range(1000):
            a = rng.integers(0, 6, size=int(rng.integers(1, 15))).astype(float)
            b = rng.integers(0, 6, size=int(rng.integers(1, 15))).astype(float)
            u_ab = mann_whitney_u(a, b, method="asymptotic").u
            u_ba = mann_whitney_u(b, a, method="asymptotic").u
            self.assertAlmostEqual(u_ab + u_ba, a.size * b.size)


class TestProfile(unittest.TestCase):
    def _validation(self):
        values = np.array([[30.0], [31.0], [29.0], [70.0], [71.0], [69.0]])
        return make_dataset(values, names=("stress_score",), role=Role.VALIDATION)

    def test_two_clusters_one_test_per_feature(self):
        profile = characterize_clusters(self._validation(), [0, 0, 0, 1, 1, 1], 0.05, ("calm", "stressed"))
        self.assertEqual(len(profile.rows), 1)
        row = profile.rows[0]
        self.assertEqual(row.comparison, "calm vs stressed")
        self.assertEqual(row.means, (30.0, 70.0))
        self.assertAlmostEqual(row.p_value, 0.1)
        self.assertEqual(profile.label_for(1), "stressed")
        self.assertEqual(ClusterProfile.from_dict(profile.to_dict()), profile)

    def test_three_clusters_compare_against_the_rest(self):
        profile = characterize_clusters(self._validation(), [0, 0, 1, 1, 2, 2])
        self.assertEqual([r.comparison for r in profile.rows], ["cluster-0 vs rest", "cluster-1 vs rest", "cluster-2 vs rest"])

    def test_label_count_must_match(self):
        with self.assertRaises(RowMismatch):
            characterize_clusters(self._validation(), [0, 0, 0, 1, 1, 1], 0.05, ("only-one",))

    def test_rows_must_align(self):
        with self.assertRaises(RowMismatch):
            characterize_clusters(self._validation(), [0, 1])


if __name__ == "__main__":
    unittest.main()
