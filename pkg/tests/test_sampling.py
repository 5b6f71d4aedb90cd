import math
import unittest

import numpy as np
from scipy import integrate, stats

from steinvar.domain.errors import DataError, InconsistentXi, InvalidMixingLaw
from steinvar.domain.regression import compute_stats
from steinvar.domain.sampling import (
    MixingKind,
    MixingLaw,
    SimConfig,
    block_generator,
    draw_stats_block,
    realize_design,
    replicate_blocks,
    sample_data_full,
    sample_errors,
    sample_stats_direct,
    sample_tau_sq,
)


class MixingLawTest(unittest.TestCase):
    def test_parse(self) -> None:
        self.assertIs(MixingLaw.parse("gauss").kind, MixingKind.POINT_MASS)
        self.assertEqual(MixingLaw.parse("t:5"), MixingLaw.inverse_gamma_t(5.0))
        law = MixingLaw.parse("two:0.5,2,2/3")
        self.assertEqual(law.kind, MixingKind.TWO_POINT)
        self.assertAlmostEqual(law.w, 2.0 / 3.0)

    def test_rejects_invalid_laws(self) -> None:
        for text in ("t:2", "t:1.5", "two:0.5,2,0.5", "two:0.5,2", "cauchy", "t:x"):
            with self.subTest(text=text):
                with self.assertRaises(InvalidMixingLaw):
                    MixingLaw.parse(text)

    def test_unit_mean(self) -> None:
        rng = block_generator(5, 0)
        for law in (MixingLaw.inverse_gamma_t(9.0), MixingLaw.parse("two:0.5,2,2/3")):
            draws = sample_tau_sq(law, rng, 400_000)
            with self.subTest(law=law.label):
                self.assertAlmostEqual(float(draws.mean()), 1.0, delta=0.01)
        self.assertEqual(sample_tau_sq(MixingLaw.point_mass(), rng), 1.0)

    def test_inverse_gamma_density_integrates_to_one(self) -> None:
        law = MixingLaw.inverse_gamma_t(5.0)
        head, _ = integrate.quad(law.density, 1e-9, 1.0, limit=200)
        tail, _ = integrate.quad(law.density, 1.0, np.inf, limit=200)
        self.assertAlmostEqual(head + tail, 1.0, places=8)


class SimConfigTest(unittest.TestCase):
    def test_validation(self) -> None:
        with self.assertRaises(DataError):
            SimConfig(5, 4, 0.0, 1.0, MixingLaw.point_mass(), 1, 10)
        with self.assertRaises(DataError):
            SimConfig(10, 4, -1.0, 1.0, MixingLaw.point_mass(), 1, 10)
        with self.assertRaises(DataError):
            SimConfig(10, 4, 0.0, 1.0, MixingLaw.point_mass(), 1, 0)

    def test_replicate_blocks(self) -> None:
        self.assertEqual(replicate_blocks(10, 4), [(0, 4), (1, 4), (2, 2)])
        self.assertEqual(replicate_blocks(8, 4), [(0, 4), (1, 4)])


class StatsSamplingTest(unittest.TestCase):
    def test_streams_are_reproducible(self) -> None:
        config = SimConfig(10, 4, 4.0, 1.0, MixingLaw.inverse_gamma_t(5.0), 42, 100)
        first = draw_stats_block(config, block_generator(42, 3), 100)
        second = draw_stats_block(config, block_generator(42, 3), 100)
        other = draw_stats_block(config, block_generator(42, 4), 100)
        np.testing.assert_array_equal(first.rss, second.rss)
        self.assertFalse(np.array_equal(first.rss, other.rss))

    def test_gaussian_marginals(self) -> None:
        config = SimConfig(10, 4, 16.0, 2.0, MixingLaw.point_mass(), 1, 100_000)
        block = draw_stats_block(config, block_generator(1, 0), 100_000)
        residual = stats.kstest(block.rss / 2.0, stats.chi2(5).cdf)
        fitted = stats.kstest((block.total_ss - block.rss) / 2.0, stats.ncx2(4, 16.0).cdf)
        self.assertGreater(residual.pvalue, 1e-4)
        self.assertGreater(fitted.pvalue, 1e-4)

    def test_remark_expectations(self) -> None:
        n, p, xi, sigma_sq = 10, 4, 9.0, 1.5
        for law in (MixingLaw.point_mass(), MixingLaw.inverse_gamma_t(9.0), MixingLaw.parse("two:0.5,2,2/3")):
            config = SimConfig(n, p, xi, sigma_sq, law, 8, 200_000)
            block = draw_stats_block(config, block_generator(8, 0), 200_000)
            fitted = block.total_ss - block.rss
            with self.subTest(law=law.label):
                self.assertAlmostEqual(float(fitted.mean()) / (sigma_sq * (xi + p)), 1.0, delta=0.02)
                self.assertAlmostEqual(float(block.total_ss.mean()) / (sigma_sq * (xi + n - 1)), 1.0, delta=0.02)

    def test_r_squared_in_unit_interval(self) -> None:
        config = SimConfig(6, 1, 0.0, 1.0, MixingLaw.inverse_gamma_t(5.0), 2, 1000)
        block = draw_stats_block(config, block_generator(2, 0), 1000)
        self.assertTrue(np.all((block.r_squared >= 0.0) & (block.r_squared <= 1.0)))
        np.testing.assert_allclose(block.r_squared, 1.0 - block.rss / block.total_ss, rtol=1e-12, atol=1e-14)

    def test_single_draw(self) -> None:
        config = SimConfig(10, 4, 1.0, 1.0, MixingLaw.point_mass(), 3, 1)
        drawn = sample_stats_direct(config, block_generator(3, 0))
        self.assertEqual((drawn.n, drawn.p), (10, 4))
        self.assertGreater(drawn.rss, 0.0)


class FullSamplingTest(unittest.TestCase):
    def test_realized_design_hits_xi(self) -> None:
        rng = np.random.default_rng(4)
        X, beta = realize_design(10, 4, 16.0, 2.0, rng)
        fitted = X @ beta
        self.assertAlmostEqual(float(fitted @ fitted) / 2.0, 16.0, places=9)
        np.testing.assert_allclose(X.sum(axis=0), 0.0, atol=1e-12)

    def test_inconsistent_xi(self) -> None:
        rng = np.random.default_rng(4)
        X, beta = realize_design(10, 4, 16.0, 1.0, rng)
        config = SimConfig(10, 4, 4.0, 1.0, MixingLaw.point_mass(), 1, 1)
        with self.assertRaises(InconsistentXi):
            sample_data_full(config, X, beta, 0.0, rng)

    def test_full_data_statistics(self) -> None:
        rng = np.random.default_rng(9)
        X, beta = realize_design(10, 4, 4.0, 1.0, rng)
        config = SimConfig(10, 4, 4.0, 1.0, MixingLaw.point_mass(), 1, 1)
        data = sample_data_full(config, X, beta, 3.0, block_generator(1, 0))
        stats_ = compute_stats(data)
        self.assertEqual(data.n, 10)
        self.assertGreater(stats_.rss, 0.0)

    def test_errors_are_spherical(self) -> None:
        errors = sample_errors(MixingLaw.inverse_gamma_t(9.0), block_generator(6, 0), 5, 200_000)
        self.assertEqual(errors.shape, (200_000, 5))
        np.testing.assert_allclose(errors.mean(axis=0), 0.0, atol=0.02)
        covariance = np.cov(errors, rowvar=False)
        np.testing.assert_allclose(covariance, np.eye(5), atol=0.04)
        self.assertTrue(math.isfinite(float(errors.var())))

    def test_inverse_gamma_errors_have_heavy_tails(self) -> None:
        # t(7) coordinates have kurtosis 3 + 6 / (7 - 4) = 5; block estimates give the s.e.
        errors = sample_errors(MixingLaw.inverse_gamma_t(7.0), block_generator(8, 0), 3, 1_000_000)
        blocks = np.array([stats.kurtosis(chunk, fisher=False) for chunk in np.array_split(errors[:, 0], 20)])
        std_err = float(blocks.std(ddof=1)) / math.sqrt(blocks.size)
        self.assertGreater(float(blocks.mean()) - 3.0 * std_err, 3.0)

    def test_gaussian_errors_have_normal_kurtosis(self) -> None:
        errors = sample_errors(MixingLaw.point_mass(), block_generator(8, 1), 3, 400_000)
        self.assertLess(abs(float(stats.kurtosis(errors[:, 0], fisher=False)) - 3.0), 0.05)


if __name__ == "__main__":
    unittest.main()
