import unittest

import numpy as np

from steinvar.domain.errors import (
    DataError,
    DegenerateResponse,
    NonPositiveVariance,
    RankDeficient,
)
from steinvar.domain.regression import (
    DesignDecomposition,
    RegressionData,
    SufficientStats,
    center_design,
    compute_stats,
    noncentrality,
)


class RegressionDataTest(unittest.TestCase):
    def test_from_raw_centers_columns(self) -> None:
        data = RegressionData.from_raw([1.0, 2.0, 4.0, 3.0], [[1.0], [2.0], [3.0], [6.0]])
        np.testing.assert_allclose(data.X.sum(axis=0), 0.0, atol=1e-12)
        self.assertEqual(data.n, 4)
        self.assertEqual(data.p, 1)

    def test_arrays_are_read_only(self) -> None:
        data = RegressionData.from_raw([1.0, 2.0, 4.0, 3.0], [[1.0], [2.0], [3.0], [6.0]])
        with self.assertRaises(ValueError):
            data.y[0] = 10.0

    def test_rejects_uncentered_design(self) -> None:
        with self.assertRaises(DataError):
            RegressionData(y=np.arange(5.0), X=np.arange(5.0)[:, np.newaxis])

    def test_rejects_too_few_observations(self) -> None:
        with self.assertRaises(DataError):
            RegressionData.from_raw([1.0, 2.0, 3.0], [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])

    def test_rejects_non_finite_values(self) -> None:
        with self.assertRaises(DataError):
            RegressionData.from_raw([1.0, np.nan, 3.0, 4.0], [[1.0], [2.0], [3.0], [5.0]])

    def test_center_design_accepts_vector(self) -> None:
        X = center_design(np.array([1.0, 2.0, 3.0]))
        self.assertEqual(X.shape, (3, 1))
        np.testing.assert_allclose(X[:, 0], [-1.0, 0.0, 1.0])


class ComputeStatsTest(unittest.TestCase):
    def setUp(self) -> None:
        rng = np.random.default_rng(7)
        self.X_raw = rng.standard_normal((10, 4))
        self.y = 2.0 + self.X_raw @ np.array([1.0, -0.5, 0.0, 0.25]) + rng.standard_normal(10)

    def test_matches_least_squares(self) -> None:
        data = RegressionData.from_raw(self.y, self.X_raw)
        stats = compute_stats(data)
        design = np.column_stack([np.ones(10), self.X_raw])
        coefficients, *_ = np.linalg.lstsq(design, self.y, rcond=None)
        residual = self.y - design @ coefficients
        centered = self.y - self.y.mean()
        self.assertAlmostEqual(stats.rss, float(residual @ residual), places=10)
        self.assertAlmostEqual(stats.total_ss, float(centered @ centered), places=10)
        self.assertAlmostEqual(stats.r_squared, 1.0 - stats.rss / stats.total_ss, places=12)
        self.assertEqual(stats.residual_df, 5)

    def test_invariant_under_response_shift_and_reflection(self) -> None:
        stats = compute_stats(RegressionData.from_raw(self.y, self.X_raw))
        reflected = -self.y + 2.0 * self.y.mean() + 7.0
        other = compute_stats(RegressionData.from_raw(reflected, self.X_raw))
        self.assertAlmostEqual(stats.rss, other.rss, places=10)
        self.assertAlmostEqual(stats.r_squared, other.r_squared, places=12)

    def test_invariant_under_column_permutation(self) -> None:
        stats = compute_stats(RegressionData.from_raw(self.y, self.X_raw))
        permuted = compute_stats(RegressionData.from_raw(self.y, self.X_raw[:, [2, 0, 3, 1]]))
        self.assertAlmostEqual(stats.rss, permuted.rss, places=10)
        self.assertAlmostEqual(stats.total_ss, permuted.total_ss, places=10)
        self.assertAlmostEqual(stats.r_squared, permuted.r_squared, places=12)

    def test_scale_equivariance(self) -> None:
        stats = compute_stats(RegressionData.from_raw(self.y, self.X_raw))
        scaled = compute_stats(RegressionData.from_raw(3.0 * self.y, self.X_raw))
        self.assertAlmostEqual(scaled.rss, 9.0 * stats.rss, places=9)
        self.assertAlmostEqual(scaled.r_squared, stats.r_squared, places=12)

    def test_perfect_fit_has_unit_r_squared(self) -> None:
        y = 1.0 + self.X_raw @ np.array([1.0, 2.0, 3.0, 4.0])
        stats = compute_stats(RegressionData.from_raw(y, self.X_raw))
        self.assertAlmostEqual(stats.r_squared, 1.0, places=12)
        self.assertLess(stats.rss, 1e-20 * stats.total_ss + 1e-18)

    def test_collinear_design_is_rank_deficient(self) -> None:
        X_raw = self.X_raw.copy()
        X_raw[:, 3] = 2.0 * X_raw[:, 0] - X_raw[:, 1]
        with self.assertRaises(RankDeficient) as context:
            compute_stats(RegressionData.from_raw(self.y, X_raw))
        self.assertIn("rank", str(context.exception))

    def test_constant_response_is_degenerate(self) -> None:
        with self.assertRaises(DegenerateResponse):
            compute_stats(RegressionData.from_raw(np.full(10, 3.5), self.X_raw))


class SufficientStatsTest(unittest.TestCase):
    def test_from_sums_and_scaling(self) -> None:
        stats = SufficientStats.from_sums(10, 4, 2.0, 8.0)
        self.assertAlmostEqual(stats.r_squared, 0.75)
        self.assertAlmostEqual(stats.fitted_ss, 6.0)
        scaled = stats.scaled(4.0)
        self.assertAlmostEqual(scaled.rss, 8.0)
        self.assertEqual(scaled.r_squared, stats.r_squared)

    def test_from_sums_rejects_zero_total(self) -> None:
        with self.assertRaises(DegenerateResponse):
            SufficientStats.from_sums(10, 4, 0.0, 0.0)

    def test_rejects_rss_above_total(self) -> None:
        with self.assertRaises(DataError):
            SufficientStats(n=10, p=4, rss=5.0, total_ss=4.0, r_squared=0.0)


class DesignDecompositionTest(unittest.TestCase):
    def test_split_sums_over_rows(self) -> None:
        rng = np.random.default_rng(3)
        X = center_design(rng.standard_normal((8, 2)))
        responses = rng.standard_normal((5, 8))
        fitted, rss = DesignDecomposition.of(X).split_sums(responses)
        for index in range(5):
            stats = compute_stats(RegressionData(y=responses[index], X=X))
            self.assertAlmostEqual(rss[index], stats.rss, places=10)
            self.assertAlmostEqual(fitted[index], stats.fitted_ss, places=10)

    def test_tall_design_keeps_an_economic_factor(self) -> None:
        rng = np.random.default_rng(5)
        X = center_design(rng.standard_normal((6000, 2)))
        y = X @ np.array([0.3, -1.0]) + rng.standard_normal(6000)
        decomposition = DesignDecomposition.of(X)
        self.assertEqual(decomposition.q.shape, (6000, 2))
        fitted, rss = decomposition.split_sums(y)
        coefficients, *_ = np.linalg.lstsq(X, y - y.mean(), rcond=None)
        residual = y - y.mean() - X @ coefficients
        self.assertLess(abs(float(rss) - float(residual @ residual)) / float(rss), 1e-10)
        centered = y - y.mean()
        self.assertLess(abs(float(fitted + rss) - float(centered @ centered)) / float(centered @ centered), 1e-12)


class NoncentralityTest(unittest.TestCase):
    def test_value(self) -> None:
        X = center_design(np.array([[1.0], [2.0], [3.0]]))
        self.assertAlmostEqual(noncentrality([2.0], X, 2.0).xi, 4.0)

    def test_rejects_non_positive_variance(self) -> None:
        X = center_design(np.array([[1.0], [2.0], [3.0]]))
        with self.assertRaises(NonPositiveVariance):
            noncentrality([1.0], X, 0.0)


if __name__ == "__main__":
    unittest.main()
