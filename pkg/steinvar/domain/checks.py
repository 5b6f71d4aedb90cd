"""Self-checks run by ``main.py verify``: each yields (name, residual, tolerance, pass)."""

import logging
import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np
from scipy import special

from steinvar.constants import ORACLE_RTOL, PROPERTY_TOLERANCE
from steinvar.domain.bayes_oracle import (
    PriorSpec,
    SamplingDensity,
    gaussian_bump_prior,
    gb_estimate_direct,
    gb_estimate_oracle,
    laplacian_power_prior,
    power_prior_mixture,
    verify_normalization,
)
from steinvar.domain.estimators import (
    EstimatorSpec,
    delta_gb,
    phi_bz,
    phi_gb,
    r_squared_grid,
    stein_loss,
)
from steinvar.domain.quadrature import (
    BetaIntegralSpec,
    beta_integral,
    beta_integral_series,
    jacobi_rule,
)
from steinvar.domain.regression import RegressionData, compute_stats
from steinvar.domain.risk import estimate_risk, risk_difference_exact, unbiased_risk
from steinvar.domain.sampling import MixingLaw, SimConfig, realize_design

simulation_logger = logging.getLogger("simulation")

ANCHOR_CASES = ((10, 4, 2.0), (12, 5, 3.0), (30, 6, 2.0))
CHECK_SEED = 20240229


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(math.isfinite(self.residual) and abs(self.residual) <= self.tolerance)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def _relative(value: float, target: float) -> float:
    return abs(value - target) / max(abs(target), 1e-300)


def endpoint_anchor_checks() -> Iterator[CheckResult]:
    for n, p, a in ANCHOR_CASES:
        yield CheckResult(
            f"endpoint_anchor:gb(0):n={n},p={p},a={a:g}",
            phi_gb(a, 0.0, n, p) - (n - p - 1) / (n - a - 1),
            1e-10,
        )
        yield CheckResult(
            f"endpoint_anchor:bz(0):n={n},p={p}",
            phi_bz(0.0, n, p) - (1.0 - p / (n - 1)),
            1e-10,
        )
        yield CheckResult(f"endpoint_anchor:gb(1):n={n},p={p},a={a:g}", phi_gb(a, 1.0, n, p) - 1.0, 1e-9)
        yield CheckResult(f"endpoint_anchor:bz(1):n={n},p={p}", phi_bz(1.0, n, p) - 1.0, 1e-9)


def bracketing_checks() -> Iterator[CheckResult]:
    grid = r_squared_grid()
    for n, p, _ in ANCHOR_CASES:
        lower = phi_bz(grid, n, p)
        middle = phi_gb(2.0, grid, n, p)
        violation = max(
            float(np.max(lower - middle)),
            float(np.max(middle - 1.0)),
            float(-np.min(np.diff(lower))),
            float(-np.min(np.diff(middle))),
            0.0,
        )
        yield CheckResult(f"bracketing_monotone:n={n},p={p}", violation, PROPERTY_TOLERANCE)


def beta_identity_checks() -> Iterator[CheckResult]:
    for b, c, m in ((1.5, 1.0, 2.5), (0.5, 2.0, -1.5), (2.0, 1.5, 0.5), (1.0, 2.0, -0.5)):
        for z in (0.0, 0.5, 0.9):
            spec = BetaIntegralSpec(b, c, m, z)
            yield CheckResult(
                f"beta_series:b={b:g},c={c:g},m={m:g},z={z:g}",
                _relative(beta_integral(spec), beta_integral_series(spec)),
                1e-10,
            )
        merged = special.gamma(b) * special.gamma(c + m) / special.gamma(b + c + m)
        yield CheckResult(
            f"beta_endpoint:b={b:g},c={c:g},m={m:g}",
            _relative(beta_integral(BetaIntegralSpec(b, c, m, 1.0)), merged),
            1e-10,
        )
        # Mean of the merged (1-t)^(c+m-1) t^(b-1) weight from its Gauss-Jacobi rule.
        nodes, weights = jacobi_rule(c + m - 1.0, b - 1.0, 32)
        mean = float(weights @ ((1.0 + nodes) / 2.0)) / float(np.sum(weights))
        yield CheckResult(
            f"jacobi_mean:b={b:g},c={c:g},m={m:g}",
            _relative(mean, b / (b + c + m)),
            1e-12,
        )
    yield CheckResult(
        "beta_function:b=2,c=3",
        _relative(beta_integral(BetaIntegralSpec(2.0, 3.0, 0.0, 0.3)), 1.0 / 12.0),
        1e-12,
    )


def normalization_checks() -> Iterator[CheckResult]:
    densities = (
        SamplingDensity.gaussian(6),
        SamplingDensity.gaussian(10),
        SamplingDensity.student_t(5.0, 6),
        SamplingDensity.student_t(9.0, 6),
    )
    for density in densities:
        report = verify_normalization(density)
        prefix = f"normalization:{density.label}:n={density.n}"
        yield CheckResult(f"{prefix}:mass", report.mass_residual, report.tolerance)
        yield CheckResult(f"{prefix}:second_moment", report.second_moment_residual / density.n, report.tolerance)


def prior_shape_checks() -> Iterator[CheckResult]:
    theta = np.array([0.6, 0.0, 0.8, 0.0, 0.0])
    yield CheckResult(
        "laplacian:harmonic:p=5,a=2",
        laplacian_power_prior(theta, 5, 2.0),
        1e-4,
    )
    yield CheckResult(
        "laplacian:superharmonic:p=5,a=3",
        max(0.0, laplacian_power_prior(theta, 5, 3.0)),
        0.0,
    )
    rng = np.random.default_rng(CHECK_SEED)
    for _ in range(3):
        p = int(rng.integers(2, 7))
        a = float(rng.uniform(0.2, p - 0.2))
        quad_form = float(rng.uniform(0.1, 10.0))
        sigma_sq = float(rng.uniform(0.2, 5.0))
        yield CheckResult(
            f"g_mixture:p={p},a={a:.3f}",
            _relative(power_prior_mixture(quad_form, sigma_sq, p, a), quad_form ** (-(p - a) / 2.0)),
            1e-8,
        )


def synthetic_data(n: int, p: int, seed: int = CHECK_SEED) -> RegressionData:
    rng = np.random.default_rng(seed)
    X, beta = realize_design(n, p, 4.0, 1.0, rng)
    y = 1.5 + X @ beta + rng.standard_normal(n)
    return RegressionData(y=y, X=X)


def oracle_equivalence_checks() -> Iterator[CheckResult]:
    data = synthetic_data(10, 4)
    stats = compute_stats(data)
    density = SamplingDensity.gaussian(10)
    for a in (1.0, 2.0, 3.0):
        oracle = gb_estimate_oracle(data, PriorSpec.power(a), density)
        yield CheckResult(
            f"oracle_equivalence:n=10,p=4,a={a:g}",
            _relative(oracle, delta_gb(a, stats).value),
            1e-6,
        )


def direct_quadrature_checks() -> Iterator[CheckResult]:
    data = synthetic_data(7, 2)
    density = SamplingDensity.gaussian(7)
    prior = PriorSpec.power(1.0)
    reduced = gb_estimate_oracle(data, prior, density)
    yield CheckResult(
        "oracle_direct:n=7,p=2,a=1",
        _relative(gb_estimate_direct(data, prior, density), reduced),
        1e-6,
    )


def density_independence_checks() -> Iterator[CheckResult]:
    # sigma^2 is integrated numerically so each density enters the full (alpha, beta, sigma^2) quadrature.
    data = synthetic_data(6, 1)
    prior = gaussian_bump_prior(1.0, [0.5], 1.0)
    reference = gb_estimate_oracle(data, prior, SamplingDensity.gaussian(6), numeric_sigma=True)
    reduced = gb_estimate_oracle(data, prior, SamplingDensity.gaussian(6))
    yield CheckResult("density_independence:numeric_vs_reduced_sigma", _relative(reference, reduced), 1e-6)
    for nu in (5.0, 9.0):
        value = gb_estimate_oracle(data, prior, SamplingDensity.student_t(nu, 6), numeric_sigma=True)
        yield CheckResult(f"density_independence:gaussian_vs_t:{nu:g}", _relative(value, reference), 1e-5)


def dominance_checks() -> Iterator[CheckResult]:
    n, p = 10, 4
    harmonic = EstimatorSpec.harmonic()
    for label in ("gauss", "t:5", "two:0.5,2,2/3"):
        mixing = MixingLaw.parse(label)
        worst = min(risk_difference_exact(harmonic, n, p, xi, mixing) for xi in (0.0, 1.0, 4.0, 16.0, 64.0))
        yield CheckResult(f"dominance_exact:h:{label}", max(0.0, -worst), ORACLE_RTOL)

    config = SimConfig(n, p, 0.0, 1.0, MixingLaw.point_mass(), CHECK_SEED, 200_000)
    point = estimate_risk(EstimatorSpec.unbiased(), config)
    target = math.log(5.0) - special.digamma(2.5) - math.log(2.0)
    yield CheckResult(
        "unbiased_risk:mc_vs_closed_form",
        (point.risk - target) / point.std_err,
        3.0,
    )
    yield CheckResult(
        "unbiased_risk:closed_form",
        unbiased_risk(n, p, MixingLaw.point_mass()) - target,
        1e-12,
    )
    yield CheckResult("stein_loss:zero_at_truth", stein_loss(2.0, 2.0), 0.0)


QUICK_CHECKS: tuple[Callable[[], Iterator[CheckResult]], ...] = (
    endpoint_anchor_checks,
    bracketing_checks,
    beta_identity_checks,
    normalization_checks,
    prior_shape_checks,
)
FULL_CHECKS = QUICK_CHECKS + (
    oracle_equivalence_checks,
    density_independence_checks,
    dominance_checks,
    direct_quadrature_checks,
)


def run_checks(level: str = "quick") -> list[CheckResult]:
    if level not in ("quick", "full"):
        raise ValueError(f"Unknown verify level '{level}'.")
    groups = QUICK_CHECKS if level == "quick" else FULL_CHECKS
    results: list[CheckResult] = []
    for group in groups:
        try:
            results.extend(group())
        except Exception as exc:
            simulation_logger.error("check group %s raised %s: %s", group.__name__, type(exc).__name__, exc)
            results.append(CheckResult(f"{group.__name__}:raised", math.inf, 0.0))
    for result in results:
        simulation_logger.info(
            "check name=%s residual=%.3e tolerance=%.1e pass=%s",
            result.name,
            result.residual,
            result.tolerance,
            result.passed,
        )
    return results
