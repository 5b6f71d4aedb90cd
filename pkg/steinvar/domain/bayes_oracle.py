"""Generalized Bayes variance estimates computed from first principles.

The estimate under Stein's loss is m_0(y) / m_1(y), where m_i integrates the
sampling density against pi(alpha, beta) (sigma^2)^(-1-i). Everything here is
slow, brute-force quadrature meant for cross-checking the closed forms at
small (n, p); it is never used on the simulation path.
"""

import enum
import logging
import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg
from scipy.special import gammaln

from steinvar.constants import NORMALIZATION_TOLERANCE
from steinvar.domain.errors import (
    BadShrinkageOrder,
    DensityNotNormalized,
    ParameterRangeViolation,
    QuadratureBudgetExceeded,
)
from steinvar.domain.regression import RegressionData, compute_stats

simulation_logger = logging.getLogger("simulation")

ORACLE_EPSREL = 1e-11
NESTED_EPSREL = 1e-9
NESTED_BUDGET = 1e-7
GENERIC_MAX_N = 8
GENERIC_MAX_P = 2


class DensityKind(enum.Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "t"
    USER_RADIAL = "radial"


@dataclass(frozen=True)
class SamplingDensity:
    """Radial density f on R^n with E[eps] = 0 and Var[eps] = I_n."""

    kind: DensityKind
    n: int
    nu: float | None = None
    f: Callable[[float], float] | None = field(default=None, compare=False, repr=False)

    @classmethod
    def gaussian(cls, n: int) -> "SamplingDensity":
        return cls(DensityKind.GAUSSIAN, n)

    @classmethod
    def student_t(cls, nu: float, n: int) -> "SamplingDensity":
        if not nu > 2:
            raise ParameterRangeViolation(f"Unit-variance Student t needs nu > 2, got {nu}.")
        return cls(DensityKind.STUDENT_T, n, nu=float(nu))

    @classmethod
    def user_radial(cls, f: Callable[[float], float], n: int, validate: bool = True) -> "SamplingDensity":
        density = cls(DensityKind.USER_RADIAL, n, f=f)
        if validate:
            report = verify_normalization(density)
            if not report.passed:
                raise DensityNotNormalized(
                    f"Radial density violates the normalization identities in R^{n}: "
                    f"residuals {report.mass_residual:.3g} (mass) and "
                    f"{report.second_moment_residual:.3g} (second moment)."
                )
        return density

    @property
    def label(self) -> str:
        if self.kind is DensityKind.STUDENT_T:
            return f"t:{self.nu:g}"
        return self.kind.value

    def log_value(self, s: float) -> float:
        n = self.n
        if self.kind is DensityKind.GAUSSIAN:
            return -0.5 * n * math.log(2.0 * math.pi) - 0.5 * s
        if self.kind is DensityKind.STUDENT_T:
            nu = self.nu
            return (
                gammaln((nu + n) / 2.0)
                - gammaln(nu / 2.0)
                - 0.5 * n * math.log(math.pi * (nu - 2.0))
                - 0.5 * (nu + n) * math.log1p(s / (nu - 2.0))
            )
        value = float(self.f(s))
        return math.log(value) if value > 0 else -math.inf


def _checked_quad(function: Callable, lower: float, upper: float, what: str, **options) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, error = integrate.quad(function, lower, upper, limit=400, **options)
        except integrate.IntegrationWarning as exc:
            raise QuadratureBudgetExceeded(f"Quadrature for {what} did not converge: {exc}") from exc
    if not math.isfinite(value) or error > NESTED_BUDGET * abs(value):
        raise QuadratureBudgetExceeded(
            f"Quadrature for {what} stopped at estimated error {error:.3g} for value {value:.6g}."
        )
    return value


def radial_moment(density: SamplingDensity, power: float) -> float:
    """int_0^inf s^power f(s) ds, on (0, 1) through s = n u / (1 - u)."""
    n = density.n

    def integrand(u: float) -> float:
        if u <= 0.0 or u >= 1.0:
            return 0.0
        s = n * u / (1.0 - u)
        log_value = power * math.log(s) + density.log_value(s) + math.log(n) - 2.0 * math.log1p(-u)
        return math.exp(log_value)

    return _checked_quad(integrand, 0.0, 1.0, f"radial moment {power:g}", epsabs=0.0, epsrel=1e-13)


@dataclass(frozen=True)
class NormalizationReport:
    density: str
    n: int
    mass_residual: float
    second_moment_residual: float
    ratio_residual: float
    tolerance: float = NORMALIZATION_TOLERANCE

    @property
    def passed(self) -> bool:
        return (
            abs(self.mass_residual) <= self.tolerance
            and abs(self.second_moment_residual) <= self.tolerance * self.n
            and abs(self.ratio_residual) <= self.tolerance
        )

    def as_dict(self) -> dict:
        return {
            "density": self.density,
            "n": self.n,
            "mass_residual": self.mass_residual,
            "second_moment_residual": self.second_moment_residual,
            "ratio_residual": self.ratio_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def verify_normalization(density: SamplingDensity, n: int | None = None) -> NormalizationReport:
    """Residuals of the mass and second-moment identities; reports, never raises."""
    if n is not None and n != density.n and density.kind is not DensityKind.USER_RADIAL:
        density = SamplingDensity(density.kind, n, nu=density.nu)
    n = density.n
    surface = math.exp(0.5 * n * math.log(math.pi) - gammaln(n / 2.0))
    try:
        mass = surface * radial_moment(density, n / 2.0 - 1.0)
        second = surface * radial_moment(density, n / 2.0)
    except QuadratureBudgetExceeded:
        return NormalizationReport(density.label, n, math.inf, math.inf, math.inf)
    gaussian_ratio = n
    ratio = (mass / second) * gaussian_ratio if second > 0 else math.inf
    report = NormalizationReport(
        density=density.label,
        n=n,
        mass_residual=mass - 1.0,
        second_moment_residual=second - n,
        ratio_residual=ratio - 1.0,
    )
    simulation_logger.info(
        "normalization density=%s n=%d mass_residual=%.2e second_residual=%.2e",
        report.density,
        n,
        report.mass_residual,
        report.second_moment_residual,
    )
    return report


class PriorKind(enum.Enum):
    POWER = "power"
    GENERIC = "generic"


@dataclass(frozen=True)
class PriorSpec:
    """pi(alpha, beta) times the fixed (sigma^2)^(-1) factor."""

    kind: PriorKind
    a: float | None = None
    pi: Callable[[float, np.ndarray], float] | None = field(default=None, compare=False, repr=False)

    @classmethod
    def power(cls, a: float) -> "PriorSpec":
        """(beta' X'X beta)^(-(p-a)/2); a = 2 is the harmonic prior."""
        return cls(PriorKind.POWER, a=float(a))

    @classmethod
    def generic(cls, pi: Callable[[float, np.ndarray], float]) -> "PriorSpec":
        return cls(PriorKind.GENERIC, pi=pi)

    def check(self, p: int) -> None:
        if self.kind is PriorKind.POWER and not 0.0 < self.a < p:
            raise BadShrinkageOrder(f"Power prior needs 0 < a < p, got a={self.a:g}, p={p}.")


def gaussian_bump_prior(alpha_center: float, beta_center, scale: float) -> PriorSpec:
    beta_center = np.atleast_1d(np.asarray(beta_center, dtype=float))

    def pi(alpha: float, beta: np.ndarray) -> float:
        distance = (alpha - alpha_center) ** 2 + float(np.sum((beta - beta_center) ** 2))
        return math.exp(-0.5 * distance / scale**2)

    return PriorSpec.generic(pi)


def _log_sigma_factor(density: SamplingDensity, i: int) -> float:
    # int sigma^-n f(r / sigma^2) (sigma^2)^(-i-1) d sigma^2 = r^-(n/2+i) * int s^(n/2+i-1) f(s) ds
    return math.log(radial_moment(density, density.n / 2.0 + i - 1.0))


def _power_g_integral(n: int, p: int, a: float, r_squared: float, i: int) -> float:
    """int_0^inf g^(a/2-1) (1+g)^((n-p-a-1+2i)/2) / (g(1-R^2)+1)^((n-a-1+2i)/2) dg via g = u/(1-u)."""
    exponent = (n - a - 1 + 2 * i) / 2.0

    def smooth(u: float) -> float:
        return (1.0 - r_squared * u) ** (-exponent)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, error = integrate.quad(
                smooth,
                0.0,
                1.0,
                weight="alg",
                wvar=(a / 2.0 - 1.0, (p - a) / 2.0 - 1.0),
                epsabs=0.0,
                epsrel=ORACLE_EPSREL,
                limit=400,
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureBudgetExceeded(f"g-integral did not converge: {exc}") from exc
    if error > NESTED_BUDGET * abs(value):
        raise QuadratureBudgetExceeded(f"g-integral error {error:.3g} too large for value {value:.6g}.")
    return value


def _power_marginal(data: RegressionData, prior: PriorSpec, density: SamplingDensity, i: int) -> float:
    stats = compute_stats(data)
    n, p, a = stats.n, stats.p, prior.a
    # i-independent factors (powers of pi and 2, |X'X|, Gamma((p-a)/2), ||v||^-(n-a-1)) dropped.
    log_value = (
        i * math.log(2.0)
        + gammaln((n - a - 1) / 2.0 + i)
        - i * math.log(stats.total_ss)
        + math.log(_power_g_integral(n, p, a, stats.r_squared, i))
        + _log_sigma_factor(density, i)
        - _log_sigma_factor(SamplingDensity.gaussian(n), i)
    )
    return math.exp(log_value)


def _nested(
    integrand: Callable[..., float],
    ranges: list,
    what: str,
    weights: dict[int, dict] | None = None,
) -> float:
    """nquad with ranges[0] innermost; ``weights`` adds quad weight options per level."""
    base = {"epsabs": 0.0, "epsrel": NESTED_EPSREL, "limit": 200}
    opts = [{**base, **(weights or {}).get(level, {})} for level in range(len(ranges))]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, error = integrate.nquad(integrand, ranges, opts=opts)
        except integrate.IntegrationWarning as exc:
            raise QuadratureBudgetExceeded(f"Nested quadrature for {what} did not converge: {exc}") from exc
    if not math.isfinite(value) or error > NESTED_BUDGET * abs(value):
        raise QuadratureBudgetExceeded(
            f"Nested quadrature for {what} stopped at error {error:.3g} for value {value:.6g}."
        )
    return value


def _check_small(data: RegressionData) -> None:
    if data.n > GENERIC_MAX_N or data.p > GENERIC_MAX_P:
        raise ParameterRangeViolation(
            f"Direct nested quadrature is limited to n <= {GENERIC_MAX_N}, p <= {GENERIC_MAX_P}; "
            f"got n={data.n}, p={data.p}."
        )


def _generic_marginal(data: RegressionData, prior: PriorSpec, density: SamplingDensity, i: int) -> float:
    _check_small(data)
    y, X = data.y, data.X
    power = data.n / 2.0 + i

    def integrand(alpha: float, *beta: float) -> float:
        coefficients = np.array(beta)
        residual = y - alpha - X @ coefficients
        return prior.pi(alpha, coefficients) * float(residual @ residual) ** (-power)

    ranges = [(-np.inf, np.inf)] * (1 + data.p)
    value = _nested(integrand, ranges, f"m_{i}")
    return value * math.exp(_log_sigma_factor(density, i))


def _generic_marginal_numeric(data: RegressionData, prior: PriorSpec, density: SamplingDensity, i: int) -> float:
    """Full (p+2)-dimensional quadrature over (sigma^2, alpha, beta).

    sigma^2 = scale u / (1-u) with a single data-based scale, so the sampling
    density is integrated numerically at every (alpha, beta) instead of being
    factored out as a radial moment.
    """
    _check_small(data)
    y, X, n = data.y, data.X, data.n
    centered = y - float(y.mean())
    scale = float(centered @ centered) / n
    exponent = n / 2.0 + 1.0 + i

    def integrand(u: float, alpha: float, *beta: float) -> float:
        if u <= 0.0 or u >= 1.0:
            return 0.0
        coefficients = np.array(beta)
        weight = prior.pi(alpha, coefficients)
        if weight == 0.0:
            return 0.0
        residual = y - alpha - X @ coefficients
        sigma_sq = scale * u / (1.0 - u)
        log_value = (
            density.log_value(float(residual @ residual) / sigma_sq)
            - exponent * math.log(sigma_sq)
            + math.log(scale)
            - 2.0 * math.log1p(-u)
        )
        return weight * math.exp(log_value)

    ranges = [(0.0, 1.0)] + [(-np.inf, np.inf)] * (1 + data.p)
    return _nested(integrand, ranges, f"m_{i} with sigma^2")


def marginal_mi_direct(data: RegressionData, prior: PriorSpec, density: SamplingDensity, i: int) -> float:
    """Power-prior marginal by nested quadrature over (alpha, theta) in polar form.

    theta = (X'X)^(1/2) beta, so the prior and the polar Jacobian leave
    rho^(a-1) d rho. On [0, s] that factor is an algebraic quadrature weight;
    beyond s the substitution rho = s / v maps the tail onto (0, 1].
    """
    _check_small(data)
    prior.check(data.p)
    y, X, p, a = data.y, data.X, data.p, prior.a
    factor = linalg.cholesky(X.T @ X, lower=True)
    to_beta = linalg.solve_triangular(factor.T, np.eye(p), lower=False)
    centered = y - float(y.mean())
    scale = math.sqrt(float(centered @ centered))
    power = data.n / 2.0 + i

    def kernel(alpha: float, theta: np.ndarray) -> float:
        residual = y - alpha - X @ (to_beta @ theta)
        return float(residual @ residual) ** (-power)

    if p == 1:

        def shell(alpha: float, rho: float) -> float:
            return kernel(alpha, np.array([rho])) + kernel(alpha, np.array([-rho]))

    else:

        def shell(alpha: float, rho: float, angle: float) -> float:
            return kernel(alpha, rho * np.array([math.cos(angle), math.sin(angle)]))

    def tail(alpha: float, v: float, *angle: float) -> float:
        if v <= 0.0:
            return 0.0
        rho = scale / v
        return rho ** (a - 1.0) * scale / v**2 * shell(alpha, rho, *angle)

    angles = [] if p == 1 else [(0.0, 2.0 * math.pi)]
    inner = _nested(
        shell,
        [(-np.inf, np.inf), (0.0, scale)] + angles,
        f"direct m_{i} inside radius {scale:.3g}",
        weights={1: {"weight": "alg", "wvar": (a - 1.0, 0.0)}},
    )
    outer = _nested(tail, [(-np.inf, np.inf), (0.0, 1.0)] + angles, f"direct m_{i} tail")
    # Same i-independent normalization as _power_marginal: strip the constants the
    # g-reduction drops so both routes agree on m_0 / m_1.
    return (inner + outer) * math.exp(_log_sigma_factor(density, i))


def marginal_mi(
    data: RegressionData,
    prior: PriorSpec,
    density: SamplingDensity,
    i: int,
    numeric_sigma: bool = False,
) -> float:
    """m_i(y) up to a factor shared by i = 0 and i = 1.

    With ``numeric_sigma`` a generic prior is integrated over sigma^2 by quadrature
    as well; otherwise sigma^2 is reduced to a radial moment of the density.
    """
    if i not in (0, 1):
        raise ParameterRangeViolation(f"Marginal index must be 0 or 1, got {i}.")
    if density.n != data.n:
        raise ParameterRangeViolation(f"Density is for n={density.n}, data has n={data.n}.")
    prior.check(data.p)
    if prior.kind is PriorKind.POWER:
        if numeric_sigma:
            raise ParameterRangeViolation("Numeric sigma^2 quadrature is only available for generic priors.")
        return _power_marginal(data, prior, density, i)
    if numeric_sigma:
        return _generic_marginal_numeric(data, prior, density, i)
    return _generic_marginal(data, prior, density, i)


def gb_estimate_oracle(
    data: RegressionData,
    prior: PriorSpec,
    density: SamplingDensity,
    numeric_sigma: bool = False,
) -> float:
    m_0 = marginal_mi(data, prior, density, 0, numeric_sigma)
    value = m_0 / marginal_mi(data, prior, density, 1, numeric_sigma)
    simulation_logger.info(
        "oracle prior=%s density=%s numeric_sigma=%s n=%d p=%d estimate=%.12g",
        prior.kind.value if prior.a is None else f"power:a={prior.a:g}",
        density.label,
        numeric_sigma,
        data.n,
        data.p,
        value,
    )
    return value


def gb_estimate_direct(data: RegressionData, prior: PriorSpec, density: SamplingDensity) -> float:
    return marginal_mi_direct(data, prior, density, 0) / marginal_mi_direct(data, prior, density, 1)


def power_prior_mixture(quad_form: float, sigma_sq: float, p: int, a: float) -> float:
    """Right side of the normal scale-mixture representation of (beta'X'X beta)^(-(p-a)/2)."""
    if not 0.0 < a < p:
        raise BadShrinkageOrder(f"Power prior needs 0 < a < p, got a={a:g}, p={p}.")
    shift = quad_form / (2.0 * sigma_sq)

    def smooth(u: float) -> float:
        if u <= 0.0:
            return 0.0
        return math.exp(((a - p) / 2.0 - 1.0) * math.log(u) - (1.0 - u) / u)

    # g = shift * u / (1 - u) leaves the (1-u)^((p-a)/2-1) factor as an algebraic weight.
    integral, _ = integrate.quad(
        smooth,
        0.0,
        1.0,
        weight="alg",
        wvar=(0.0, (p - a) / 2.0 - 1.0),
        epsabs=0.0,
        epsrel=ORACLE_EPSREL,
        limit=400,
    )
    log_prefactor = (
        (a / 2.0) * math.log(2.0)
        + (p / 2.0) * math.log(math.pi)
        - gammaln((p - a) / 2.0)
        + (a / 2.0) * math.log(sigma_sq)
        - (p / 2.0) * math.log(2.0 * math.pi * sigma_sq)
        + ((a - p) / 2.0) * math.log(shift)
    )
    return math.exp(log_prefactor) * integral


def power_prior(theta, p: int, a: float) -> float:
    return float(np.linalg.norm(theta)) ** (-(p - a))


def laplacian_power_prior(theta, p: int, a: float, step: float = 1e-3) -> float:
    """Central second differences of |theta|^-(p-a) summed over coordinates."""
    theta = np.asarray(theta, dtype=float)
    centre = power_prior(theta, p, a)
    total = 0.0
    for axis in range(theta.size):
        offset = np.zeros_like(theta)
        offset[axis] = step
        total += power_prior(theta + offset, p, a) - 2.0 * centre + power_prior(theta - offset, p, a)
    return total / step**2


def laplacian_power_prior_exact(theta, p: int, a: float) -> float:
    radius = float(np.linalg.norm(theta))
    return (p - a) * (2.0 - a) * radius ** (-(p - a) - 2.0)
