import math
import os
import unittest

import numpy as np

from steinvar.constants import SLOW_TESTS_ENV_VAR
from steinvar.domain.bayes_oracle import (
    PriorSpec,
    SamplingDensity,
    gaussian_bump_prior,
    gb_estimate_direct,
    gb_estimate_oracle,
    laplacian_power_prior,
    laplacian_power_prior_exact,
    marginal_mi,
    power_prior_mixture,
    verify_normalization,
)
from steinvar.domain.checks import synthetic_data
from steinvar.domain.errors import BadShrinkageOrder, DensityNotNormalized, ParameterRangeViolation
from steinvar.domain.estimators import delta_gb
from steinvar.domain.regression import RegressionData, compute_stats

SLOW = bool(os.getenv(SLOW_TESTS_ENV_VAR))


def _gaussian_radial(n: int, scale: float = 1.0):
    return lambda s: scale * (2.0 * math.pi) ** (-n / 2.0) * math.exp(-s / 2.0)


class NormalizationTest(unittest.TestCase):
    def test_gaussian_identities(self) -> None:
        for n in (2, 6, 10):
            report = verify_normalization(SamplingDensity.gaussian(n))
            with self.subTest(n=n):
                self.assertLess(abs(report.mass_residual), 1e-10)
                self.assertLess(abs(report.second_moment_residual), 1e-9)
                self.assertTrue(report.passed)

    def test_student_t_identities(self) -> None:
        report = verify_normalization(SamplingDensity.student_t(5.0, 6))
        self.assertLess(abs(report.mass_residual), 1e-8)
        self.assertLess(abs(report.second_moment_residual), 6e-8)
        self.assertTrue(report.as_dict()["pass"])

    def test_dimension_override(self) -> None:
        report = verify_normalization(SamplingDensity.gaussian(6), n=3)
        self.assertEqual(report.n, 3)
        self.assertTrue(report.passed)

    def test_misnormalized_density_is_reported(self) -> None:
        density = SamplingDensity.user_radial(_gaussian_radial(4, 2.0), 4, validate=False)
        report = verify_normalization(density)
        self.assertAlmostEqual(report.mass_residual, 1.0, places=8)
        self.assertFalse(report.passed)

    def test_user_radial_validation(self) -> None:
        density = SamplingDensity.user_radial(_gaussian_radial(4), 4)
        self.assertEqual(density.label, "radial")
        with self.assertRaises(DensityNotNormalized):
            SamplingDensity.user_radial(_gaussian_radial(4, 2.0), 4)

    def test_student_t_needs_finite_variance(self) -> None:
        with self.assertRaises(ParameterRangeViolation):
            SamplingDensity.student_t(2.0, 6)


class PowerPriorOracleTest(unittest.TestCase):
    def setUp(self) -> None:
        self.data = synthetic_data(10, 4)
        self.stats = compute_stats(self.data)

    def test_matches_closed_form_estimator(self) -> None:
        density = SamplingDensity.gaussian(10)
        for a in (1.0, 2.0, 3.0):
            oracle = gb_estimate_oracle(self.data, PriorSpec.power(a), density)
            expected = delta_gb(a, self.stats).value
            with self.subTest(a=a):
                self.assertLess(abs(oracle - expected) / expected, 1e-6)

    def test_independent_of_sampling_density(self) -> None:
        prior = PriorSpec.power(2.0)
        reference = gb_estimate_oracle(self.data, prior, SamplingDensity.gaussian(10))
        for nu in (5.0, 9.0):
            value = gb_estimate_oracle(self.data, prior, SamplingDensity.student_t(nu, 10))
            with self.subTest(nu=nu):
                self.assertLess(abs(value - reference) / reference, 1e-8)

    def test_reflection_and_scale(self) -> None:
        prior = PriorSpec.power(2.0)
        density = SamplingDensity.gaussian(10)
        base = gb_estimate_oracle(self.data, prior, density)
        reflected = RegressionData(y=-self.data.y, X=self.data.X)
        scaled = RegressionData(y=3.0 * self.data.y, X=self.data.X)
        self.assertLess(abs(gb_estimate_oracle(reflected, prior, density) - base) / base, 1e-10)
        self.assertLess(abs(gb_estimate_oracle(scaled, prior, density) - 9.0 * base) / base, 1e-9)

    def test_rejects_bad_inputs(self) -> None:
        density = SamplingDensity.gaussian(10)
        with self.assertRaises(ParameterRangeViolation):
            marginal_mi(self.data, PriorSpec.power(2.0), density, 2)
        with self.assertRaises(ParameterRangeViolation):
            marginal_mi(self.data, PriorSpec.power(2.0), SamplingDensity.gaussian(9), 0)
        with self.assertRaises(BadShrinkageOrder):
            marginal_mi(self.data, PriorSpec.power(4.0), density, 0)

    def test_generic_prior_is_limited_to_small_problems(self) -> None:
        prior = gaussian_bump_prior(0.0, np.zeros(4), 1.0)
        with self.assertRaises(ParameterRangeViolation):
            gb_estimate_oracle(self.data, prior, SamplingDensity.gaussian(10))


class GenericPriorOracleTest(unittest.TestCase):
    def test_independent_of_sampling_density(self) -> None:
        data = synthetic_data(6, 1)
        prior = gaussian_bump_prior(1.0, [0.5], 1.0)
        reference = gb_estimate_oracle(data, prior, SamplingDensity.gaussian(6))
        value = gb_estimate_oracle(data, prior, SamplingDensity.student_t(5.0, 6))
        self.assertGreater(reference, 0.0)
        self.assertLess(abs(value - reference) / reference, 1e-5)

    @unittest.skipUnless(SLOW, "set STEINVAR_SLOW_TESTS=1 for three-dimensional quadrature")
    def test_numeric_sigma_is_density_independent(self) -> None:
        data = synthetic_data(6, 1)
        prior = gaussian_bump_prior(1.0, [0.5], 1.0)
        reduced = gb_estimate_oracle(data, prior, SamplingDensity.gaussian(6))
        reference = gb_estimate_oracle(data, prior, SamplingDensity.gaussian(6), numeric_sigma=True)
        self.assertLess(abs(reference - reduced) / reduced, 1e-6)
        for nu in (5.0, 9.0):
            value = gb_estimate_oracle(data, prior, SamplingDensity.student_t(nu, 6), numeric_sigma=True)
            with self.subTest(nu=nu):
                self.assertLess(abs(value - reference) / reference, 1e-5)

    def test_numeric_sigma_needs_a_generic_prior(self) -> None:
        data = synthetic_data(6, 1)
        with self.assertRaises(ParameterRangeViolation):
            marginal_mi(data, PriorSpec.power(0.5), SamplingDensity.gaussian(6), 0, numeric_sigma=True)

    @unittest.skipUnless(SLOW, "set STEINVAR_SLOW_TESTS=1 for three-dimensional quadrature")
    def test_direct_quadrature_matches_reduction(self) -> None:
        data = synthetic_data(7, 2)
        prior = PriorSpec.power(1.0)
        density = SamplingDensity.gaussian(7)
        direct = gb_estimate_direct(data, prior, density)
        reduced = gb_estimate_oracle(data, prior, density)
        self.assertLess(abs(direct - reduced) / reduced, 1e-6)

    def test_direct_quadrature_single_predictor(self) -> None:
        data = synthetic_data(6, 1)
        prior = PriorSpec.power(0.5)
        density = SamplingDensity.gaussian(6)
        direct = gb_estimate_direct(data, prior, density)
        self.assertLess(abs(direct - delta_gb(0.5, compute_stats(data)).value) / direct, 1e-6)


class PowerPriorShapeTest(unittest.TestCase):
    def test_normal_scale_mixture(self) -> None:
        rng = np.random.default_rng(17)
        for _ in range(10):
            p = int(rng.integers(2, 8))
            a = float(rng.uniform(0.2, p - 0.2))
            quad_form = float(rng.uniform(0.05, 20.0))
            sigma_sq = float(rng.uniform(0.1, 10.0))
            expected = quad_form ** (-(p - a) / 2.0)
            value = power_prior_mixture(quad_form, sigma_sq, p, a)
            with self.subTest(p=p, a=a):
                self.assertLess(abs(value - expected) / expected, 1e-8)

    def test_mixture_rejects_bad_order(self) -> None:
        with self.assertRaises(BadShrinkageOrder):
            power_prior_mixture(1.0, 1.0, 3, 3.0)

    def test_laplacian_signs(self) -> None:
        theta = np.array([0.6, 0.0, 0.8, 0.0, 0.0])
        self.assertAlmostEqual(laplacian_power_prior(theta, 5, 2.0), 0.0, delta=1e-4)
        self.assertLess(laplacian_power_prior(theta, 5, 3.0), 0.0)
        self.assertGreater(laplacian_power_prior(theta, 5, 1.0), 0.0)
        self.assertEqual(laplacian_power_prior_exact(theta, 5, 2.0), 0.0)

    def test_finite_differences_match_exact(self) -> None:
        theta = np.array([0.3, -0.4, 1.2])
        for a in (0.5, 1.5, 2.5):
            exact = laplacian_power_prior_exact(theta, 3, a)
            with self.subTest(a=a):
                self.assertLess(abs(laplacian_power_prior(theta, 3, a) - exact), 1e-4 * abs(exact))


if __name__ == "__main__":
    unittest.main()
