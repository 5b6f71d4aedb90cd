import enum
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from steinvar.constants import MONOTONE_GRID_SIZE, PROPERTY_TOLERANCE
from steinvar.domain.errors import (
    BadShrinkageOrder,
    NonMonotonePhi,
    NonPositiveArgument,
    ParameterError,
    ParameterRangeViolation,
    ZeroResidual,
)
from steinvar.domain.quadrature import beta_integral_values
from steinvar.domain.regression import SufficientStats


class EstimatorKind(enum.Enum):
    UNBIASED = "u"
    STEIN = "stein"
    BREWSTER_ZIDEK = "bz"
    GENERALIZED_BAYES = "gb"
    SIMPLE_BAYES_STAR = "sbstar"
    PHI_PLUGIN = "phi"
    DELTA_PLUGIN = "delta"


_ALIASES = {
    "u": EstimatorKind.UNBIASED,
    "unbiased": EstimatorKind.UNBIASED,
    "stein": EstimatorKind.STEIN,
    "st": EstimatorKind.STEIN,
    "bz": EstimatorKind.BREWSTER_ZIDEK,
    "gb": EstimatorKind.GENERALIZED_BAYES,
    "h": EstimatorKind.GENERALIZED_BAYES,
    "sbstar": EstimatorKind.SIMPLE_BAYES_STAR,
}


def _check_dimensions(n: int, p: int) -> None:
    if p < 1 or n <= p + 1:
        raise ParameterRangeViolation(f"Need n > p + 1 and p >= 1, got n={n}, p={p}.")


def _r_squared_array(r_squared) -> np.ndarray:
    values = np.asarray(r_squared, dtype=float)
    if np.any((values < 0.0) | (values > 1.0)) or not np.all(np.isfinite(values)):
        raise ParameterRangeViolation("R^2 values must lie in [0, 1].")
    return values


def _like_input(values: np.ndarray, original):
    return float(values) if np.ndim(original) == 0 else values


def phi_bz(r_squared, n: int, p: int):
    _check_dimensions(n, p)
    z = _r_squared_array(r_squared)
    m = (n - p - 1) / 2.0
    integral = beta_integral_values(p / 2.0, 1.0, m, z)
    values = 1.0 - 2.0 * (1.0 - z) ** m / (n - 1) / integral
    return _like_input(values, r_squared)


def phi_gb(a: float, r_squared, n: int, p: int):
    if not 0.0 < a < p:
        raise BadShrinkageOrder(f"Shrinkage order needs 0 < a < p, got a={a}, p={p}.")
    _check_dimensions(n, p)
    z = _r_squared_array(r_squared)
    b = (p - a) / 2.0
    c = a / 2.0
    lower = beta_integral_values(b, c, (n - p - a - 1) / 2.0, z)
    upper = beta_integral_values(b, c, (n - p - a + 1) / 2.0, z)
    values = (n - p - 1) / (n - a - 1) * lower / upper
    return _like_input(values, r_squared)


def phi_stein(r_squared, n: int, p: int):
    _check_dimensions(n, p)
    z = _r_squared_array(r_squared)
    with np.errstate(divide="ignore"):
        pooled = (n - p - 1) / ((n - 1) * (1.0 - z))
    values = np.minimum(1.0, pooled)
    return _like_input(values, r_squared)


def sb_star_coefficient(n: int, p: int) -> float:
    if not (n - 1) / 2.0 < p < n - 1:
        raise ParameterRangeViolation(
            f"delta_SB* needs (n-1)/2 < p < n-1, got n={n}, p={p} "
            f"(window ({(n - 1) / 2.0:g}, {n - 1}))."
        )
    return (2 * p - n + 1) / (n - p - 1)


def phi_sb_star(r_squared, n: int, p: int):
    coefficient = sb_star_coefficient(n, p)
    z = _r_squared_array(r_squared)
    values = 1.0 / (1.0 + coefficient * (1.0 - z))
    return _like_input(values, r_squared)


@dataclass(frozen=True)
class EstimatorSpec:
    """Tagged choice of variance estimator; parse with ``EstimatorSpec.parse``."""

    kind: EstimatorKind
    a: float | None = None
    name: str | None = None
    phi_fn: Callable | None = field(default=None, compare=False, repr=False)
    delta_fn: Callable | None = field(default=None, compare=False, repr=False)

    @classmethod
    def unbiased(cls) -> "EstimatorSpec":
        return cls(EstimatorKind.UNBIASED)

    @classmethod
    def stein(cls) -> "EstimatorSpec":
        return cls(EstimatorKind.STEIN)

    @classmethod
    def brewster_zidek(cls) -> "EstimatorSpec":
        return cls(EstimatorKind.BREWSTER_ZIDEK)

    @classmethod
    def generalized_bayes(cls, a: float) -> "EstimatorSpec":
        return cls(EstimatorKind.GENERALIZED_BAYES, a=float(a))

    @classmethod
    def harmonic(cls) -> "EstimatorSpec":
        return cls.generalized_bayes(2.0)

    @classmethod
    def simple_bayes_star(cls) -> "EstimatorSpec":
        return cls(EstimatorKind.SIMPLE_BAYES_STAR)

    @classmethod
    def from_phi(cls, name: str, phi: Callable) -> "EstimatorSpec":
        """Plug-in phi(R^2) * RSS / (n - p - 1); phi must accept numpy arrays."""
        return cls(EstimatorKind.PHI_PLUGIN, name=name, phi_fn=phi)

    @classmethod
    def from_delta(cls, name: str, delta: Callable) -> "EstimatorSpec":
        """Plug-in estimator taking SufficientStats and returning a positive float."""
        return cls(EstimatorKind.DELTA_PLUGIN, name=name, delta_fn=delta)

    @classmethod
    def parse(cls, text: str) -> "EstimatorSpec":
        head, _, tail = text.strip().partition(":")
        head = head.strip().lower()
        if head not in _ALIASES:
            raise ParameterError(
                f"Unknown estimator '{text}' (expected one of u, stein, bz, gb:a=<value>, h, sbstar)."
            )
        options: dict[str, str] = {}
        for item in filter(None, (part.strip() for part in tail.split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise ParameterError(f"Estimator option '{item}' must look like key=value.")
            options[key.strip().lower()] = value.strip()
        kind = _ALIASES[head]
        if head == "h":
            options.setdefault("a", "2")
        if kind is EstimatorKind.GENERALIZED_BAYES:
            if "a" not in options:
                raise ParameterError("Estimator 'gb' needs a shrinkage order, e.g. gb:a=2.")
            try:
                a = float(options.pop("a"))
            except ValueError as exc:
                raise ParameterError(f"Invalid shrinkage order in '{text}'.") from exc
            if options:
                raise ParameterError(f"Unknown options for '{head}': {sorted(options)}.")
            return cls.generalized_bayes(a)
        if options:
            raise ParameterError(f"Unknown options for '{head}': {sorted(options)}.")
        return cls(kind)

    @property
    def label(self) -> str:
        if self.kind is EstimatorKind.GENERALIZED_BAYES:
            return f"gb:a={self.a:g}"
        if self.kind in (EstimatorKind.PHI_PLUGIN, EstimatorKind.DELTA_PLUGIN):
            return f"{self.kind.value}:{self.name}"
        return self.kind.value

    @property
    def is_phi_form(self) -> bool:
        return self.kind is not EstimatorKind.DELTA_PLUGIN

    def validate(self, n: int, p: int) -> None:
        _check_dimensions(n, p)
        if self.kind is EstimatorKind.GENERALIZED_BAYES and not 0.0 < self.a < p:
            raise BadShrinkageOrder(f"Shrinkage order needs 0 < a < p, got a={self.a:g}, p={p}.")
        if self.kind is EstimatorKind.SIMPLE_BAYES_STAR:
            sb_star_coefficient(n, p)

    def phi(self, r_squared, n: int, p: int):
        if self.kind is EstimatorKind.UNBIASED:
            _check_dimensions(n, p)
            return _like_input(np.ones_like(_r_squared_array(r_squared)), r_squared)
        if self.kind is EstimatorKind.STEIN:
            return phi_stein(r_squared, n, p)
        if self.kind is EstimatorKind.BREWSTER_ZIDEK:
            return phi_bz(r_squared, n, p)
        if self.kind is EstimatorKind.GENERALIZED_BAYES:
            return phi_gb(self.a, r_squared, n, p)
        if self.kind is EstimatorKind.SIMPLE_BAYES_STAR:
            return phi_sb_star(r_squared, n, p)
        if self.kind is EstimatorKind.PHI_PLUGIN:
            values = np.asarray(self.phi_fn(_r_squared_array(r_squared)), dtype=float)
            return _like_input(values, r_squared)
        raise ParameterError(f"Estimator {self.label} is not of the form phi(R^2) * RSS / (n-p-1).")

    def values(self, rss: np.ndarray, total_ss: np.ndarray, n: int, p: int) -> np.ndarray:
        """Estimates for arrays of (RSS, total SS) sharing one (n, p)."""
        rss = np.asarray(rss, dtype=float)
        total_ss = np.asarray(total_ss, dtype=float)
        if np.any(rss <= 0):
            raise ZeroResidual("RSS must be positive for every replicate.")
        if self.kind is EstimatorKind.DELTA_PLUGIN:
            return np.array(
                [
                    self.delta_fn(SufficientStats.from_sums(n, p, float(r), float(t)))
                    for r, t in zip(rss, total_ss)
                ]
            )
        r_squared = np.clip(1.0 - rss / total_ss, 0.0, 1.0)
        return np.asarray(self.phi(r_squared, n, p)) * rss / (n - p - 1)

    def estimate(self, stats: SufficientStats) -> "VarianceEstimate":
        if self.kind is EstimatorKind.UNBIASED:
            return delta_u(stats)
        if self.kind is EstimatorKind.STEIN:
            return delta_stein(stats)
        if self.kind is EstimatorKind.BREWSTER_ZIDEK:
            return delta_bz(stats)
        if self.kind is EstimatorKind.GENERALIZED_BAYES:
            return delta_gb(self.a, stats)
        if self.kind is EstimatorKind.SIMPLE_BAYES_STAR:
            return delta_sb_star(stats)
        _require_residual(stats)
        if self.kind is EstimatorKind.PHI_PLUGIN:
            return _phi_form(stats, float(self.phi(stats.r_squared, stats.n, stats.p)), self)
        value = float(self.delta_fn(stats))
        return VarianceEstimate(value=value, phi=value * stats.residual_df / stats.rss, estimator=self)


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    phi: float
    estimator: EstimatorSpec


def _require_residual(stats: SufficientStats) -> None:
    if stats.rss <= 0:
        raise ZeroResidual("RSS is zero: Stein's loss is undefined at a zero estimate.")


def _phi_form(stats: SufficientStats, phi: float, spec: EstimatorSpec) -> VarianceEstimate:
    return VarianceEstimate(value=phi * stats.rss / stats.residual_df, phi=phi, estimator=spec)


def delta_u(stats: SufficientStats) -> VarianceEstimate:
    _require_residual(stats)
    return _phi_form(stats, 1.0, EstimatorSpec.unbiased())


def delta_stein(stats: SufficientStats) -> VarianceEstimate:
    _require_residual(stats)
    value = min(stats.rss / stats.residual_df, stats.total_ss / (stats.n - 1))
    return VarianceEstimate(
        value=value,
        phi=value * stats.residual_df / stats.rss,
        estimator=EstimatorSpec.stein(),
    )


def delta_bz(stats: SufficientStats) -> VarianceEstimate:
    _require_residual(stats)
    return _phi_form(stats, phi_bz(stats.r_squared, stats.n, stats.p), EstimatorSpec.brewster_zidek())


def delta_gb(a: float, stats: SufficientStats) -> VarianceEstimate:
    _require_residual(stats)
    phi = phi_gb(a, stats.r_squared, stats.n, stats.p)
    return _phi_form(stats, phi, EstimatorSpec.generalized_bayes(a))


def delta_h(stats: SufficientStats) -> VarianceEstimate:
    """Generalized Bayes rule under the harmonic prior (a = 2); needs p >= 3."""
    if stats.p < 3:
        raise ParameterRangeViolation(f"The harmonic-prior estimator needs p >= 3, got p={stats.p}.")
    return delta_gb(2.0, stats)


def delta_sb_star(stats: SufficientStats) -> VarianceEstimate:
    _require_residual(stats)
    phi = phi_sb_star(stats.r_squared, stats.n, stats.p)
    return _phi_form(stats, phi, EstimatorSpec.simple_bayes_star())


def stein_loss(delta, sigma_sq):
    delta_values = np.asarray(delta, dtype=float)
    sigma_values = np.asarray(sigma_sq, dtype=float)
    if np.any(delta_values <= 0) or np.any(sigma_values <= 0):
        raise NonPositiveArgument("Stein's loss needs a positive estimate and a positive variance.")
    ratio = delta_values / sigma_values
    loss = (ratio - 1.0) - np.log(ratio)
    return float(loss) if loss.ndim == 0 else loss


def r_squared_grid(size: int = MONOTONE_GRID_SIZE) -> np.ndarray:
    return np.linspace(0.0, 1.0, size)


def check_phi_monotone(spec: EstimatorSpec, n: int, p: int, size: int = MONOTONE_GRID_SIZE) -> np.ndarray:
    """Raise NonMonotonePhi unless phi is nondecreasing on an R^2 grid; returns the values."""
    values = np.asarray(spec.phi(r_squared_grid(size), n, p), dtype=float)
    steps = np.diff(values)
    worst = float(steps.min()) if steps.size else 0.0
    if not np.all(np.isfinite(values)) or worst < -PROPERTY_TOLERANCE:
        raise NonMonotonePhi(
            f"phi for {spec.label} is not nondecreasing at (n={n}, p={p}): "
            f"largest drop {-worst:.3g}."
        )
    return values


def phi_at_zero(spec: EstimatorSpec, n: int, p: int) -> float:
    """Closed-form phi(0) for the built-in families, used as an endpoint anchor."""
    if spec.kind is EstimatorKind.GENERALIZED_BAYES:
        return (n - p - 1) / (n - spec.a - 1)
    if spec.kind is EstimatorKind.BREWSTER_ZIDEK:
        return 1.0 - p / (n - 1)
    if spec.kind is EstimatorKind.STEIN:
        return min(1.0, (n - p - 1) / (n - 1))
    if spec.kind is EstimatorKind.SIMPLE_BAYES_STAR:
        return 1.0 / (1.0 + sb_star_coefficient(n, p))
    if spec.kind is EstimatorKind.UNBIASED:
        return 1.0
    return math.nan
