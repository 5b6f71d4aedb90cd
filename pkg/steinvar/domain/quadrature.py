"""Beta-type integrals I(b, c, m, z) = int_0^1 t^(b-1) (1-t)^(c-1) (1-z t)^m dt.

The endpoint factors t^(b-1) and (1-t)^(c-1) are absorbed into Gauss-Jacobi
weights. For z > 1/2 the factor (1-z t)^m has a branch point at t = 1/z just
beyond the interval, so [0, 1] is split into panels graded geometrically
toward t = 1 until the last panel is no longer than the gap 1/z - 1. Every
panel then sees its nearest singularity at least one half-length away and the
rule converges geometrically in the node count.
"""

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from steinvar.constants import (
    NEAR_ONE_GAP,
    QUADRATURE_MAX_NODES,
    QUADRATURE_MIN_NODES,
    QUADRATURE_RTOL,
    SERIES_MAX_TERMS,
    SERIES_TERM_RTOL,
)
from steinvar.domain.errors import (
    NoConvergence,
    NotIntegrable,
    ParameterRangeViolation,
    SeriesDiverged,
)

_RULE_CACHE_LOCK = threading.Lock()
_RULE_CACHE: dict[tuple[float, float, int], tuple[np.ndarray, np.ndarray]] = {}


@dataclass(frozen=True)
class BetaIntegralSpec:
    b: float
    c: float
    m: float
    z: float

    def __post_init__(self) -> None:
        validate_exponents(self.b, self.c, self.m)
        if not 0.0 <= self.z <= 1.0:
            raise NotIntegrable(f"z must lie in [0, 1], got {self.z}.")
        if self.z == 1.0 and self.c + self.m <= 0:
            raise NotIntegrable(
                f"At z=1 the integral needs c + m > 0, got c={self.c}, m={self.m}."
            )


@dataclass(frozen=True)
class BetaIntegralResult:
    value: float
    method: str
    nodes: int
    near_one: bool = False


def validate_exponents(b: float, c: float, m: float) -> None:
    if not (b > 0 and c > 0):
        raise NotIntegrable(f"Exponents need b > 0 and c > 0, got b={b}, c={c}.")
    if not math.isfinite(m):
        raise NotIntegrable(f"Power m must be finite, got {m}.")


def jacobi_rule(alpha: float, beta: float, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi nodes/weights on [-1, 1] for (1-x)^alpha (1+x)^beta, cached.

    Golub-Welsch: the nodes are the eigenvalues of the symmetric three-term
    recurrence matrix and each weight is the exact zeroth moment times the
    squared first component of its eigenvector. Unlike weights recovered from
    polynomial derivatives, these stay accurate when alpha or beta is near -1.
    """
    key = (float(alpha), float(beta), int(count))
    with _RULE_CACHE_LOCK:
        cached = _RULE_CACHE.get(key)
    if cached is not None:
        return cached
    diagonal, off_diagonal = _jacobi_recurrence(float(alpha), float(beta), int(count))
    nodes, vectors = linalg.eigh_tridiagonal(diagonal, off_diagonal)
    weights = vectors[0] ** 2
    moment = 2.0 ** (alpha + beta + 1.0) * math.exp(special.betaln(alpha + 1.0, beta + 1.0))
    weights = weights * (moment / weights.sum())
    nodes.setflags(write=False)
    weights.setflags(write=False)
    with _RULE_CACHE_LOCK:
        return _RULE_CACHE.setdefault(key, (nodes, weights))


def _jacobi_recurrence(alpha: float, beta: float, count: int) -> tuple[np.ndarray, np.ndarray]:
    total = alpha + beta
    diagonal = np.empty(count)
    diagonal[0] = (beta - alpha) / (total + 2.0)
    k = np.arange(1, count, dtype=float)
    diagonal[1:] = (beta**2 - alpha**2) / ((2.0 * k + total) * (2.0 * k + total + 2.0))

    off_diagonal = np.empty(count - 1)
    if count > 1:
        # k = 1 written without the (1 + total) / (1 + total) factor, which is 0/0 at total = -1.
        off_diagonal[0] = math.sqrt(
            4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + total) ** 2 * (3.0 + total))
        )
        k = k[1:]
        off_diagonal[1:] = np.sqrt(
            4.0 * k * (k + alpha) * (k + beta) * (k + total)
            / ((2.0 * k + total) ** 2 * (2.0 * k + total + 1.0) * (2.0 * k + total - 1.0))
        )
    return diagonal, off_diagonal


def panel_level(z: float) -> int:
    """0 for a single panel, otherwise the number of graded panels toward t=1."""
    if z <= 0.5:
        return 0
    gap = (1.0 - z) / z
    return max(1, math.ceil(math.log2(1.0 / gap)))


def _power_term(z: np.ndarray, u: np.ndarray, m: float) -> np.ndarray:
    # (1 - z t)^m written as ((1 - z) + z (1 - t))^m keeps precision near t = 1.
    return ((1.0 - z)[:, np.newaxis] + z[:, np.newaxis] * u[np.newaxis, :]) ** m


def _graded_sum(b: float, c: float, m: float, z: np.ndarray, level: int, count: int) -> np.ndarray:
    if level == 0:
        x, w = jacobi_rule(c - 1.0, b - 1.0, count)
        u = (1.0 - x) / 2.0
        return 2.0 ** (1.0 - b - c) * (_power_term(z, u, m) @ w)

    x, w = jacobi_rule(0.0, b - 1.0, count)
    t = (1.0 + x) / 4.0
    u = 1.0 - t
    total = 4.0 ** (-b) * ((_power_term(z, u, m) * u ** (c - 1.0)) @ w)

    x, w = jacobi_rule(0.0, 0.0, count)
    for k in range(1, level):
        half_length = 2.0 ** (-k - 2)
        u = 2.0 ** (-k - 1) + half_length * (1.0 - x)
        t = 1.0 - u
        integrand = _power_term(z, u, m) * (t ** (b - 1.0) * u ** (c - 1.0))
        total = total + half_length * (integrand @ w)

    width = 2.0 ** (-level)
    x, w = jacobi_rule(c - 1.0, 0.0, count)
    u = width * (1.0 - x) / 2.0
    t = 1.0 - u
    total = total + (width / 2.0) ** c * ((_power_term(z, u, m) * t ** (b - 1.0)) @ w)
    return total


def _converged_sum(b: float, c: float, m: float, z: np.ndarray, level: int) -> tuple[np.ndarray, int]:
    count = QUADRATURE_MIN_NODES
    previous = _graded_sum(b, c, m, z, level, count)
    while count < QUADRATURE_MAX_NODES:
        count *= 2
        current = _graded_sum(b, c, m, z, level, count)
        change = np.max(np.abs(current - previous) / np.abs(current))
        if change <= QUADRATURE_RTOL:
            return current, count
        previous = current
    raise NoConvergence(
        f"Gauss-Jacobi did not converge with {QUADRATURE_MAX_NODES} nodes "
        f"(b={b}, c={c}, m={m}, z in [{z.min()}, {z.max()}])."
    )


def _endpoint_value(b: float, c: float, m: float) -> float:
    return math.exp(special.betaln(b, c + m))


def _near_one_value(b: float, c: float, m: float, z: np.ndarray) -> np.ndarray:
    slope = m * math.exp(special.betaln(b + 1.0, c + m - 1.0))
    return _endpoint_value(b, c, m) + (1.0 - z) * slope


def beta_integral_values(b: float, c: float, m: float, z) -> np.ndarray:
    """Vectorized I(b, c, m, z) over an array of z in [0, 1]."""
    validate_exponents(b, c, m)
    z = np.asarray(z, dtype=float)
    flat = np.atleast_1d(z).ravel()
    if np.any((flat < 0.0) | (flat > 1.0)) or not np.all(np.isfinite(flat)):
        raise NotIntegrable("z values must lie in [0, 1].")
    result = np.empty_like(flat)

    at_one = flat == 1.0
    if np.any(at_one):
        if c + m <= 0:
            raise NotIntegrable(f"At z=1 the integral needs c + m > 0, got c={c}, m={m}.")
        result[at_one] = _endpoint_value(b, c, m)

    near_one = (~at_one) & (flat > 1.0 - NEAR_ONE_GAP)
    if np.any(near_one) and c + m > 1.0:
        result[near_one] = _near_one_value(b, c, m, flat[near_one])
        remaining = ~(at_one | near_one)
    else:
        remaining = ~at_one

    if np.any(remaining):
        indices = np.flatnonzero(remaining)
        levels = np.array([panel_level(value) for value in flat[indices]])
        for level in np.unique(levels):
            selected = indices[levels == level]
            result[selected], _ = _converged_sum(b, c, m, flat[selected], int(level))
    return result.reshape(z.shape)


def evaluate_beta_integral(spec: BetaIntegralSpec) -> BetaIntegralResult:
    b, c, m, z = spec.b, spec.c, spec.m, spec.z
    if z == 1.0:
        return BetaIntegralResult(value=_endpoint_value(b, c, m), method="endpoint", nodes=0)
    near_one = z > 1.0 - NEAR_ONE_GAP
    if near_one and c + m > 1.0:
        value = float(_near_one_value(b, c, m, np.array([z]))[0])
        return BetaIntegralResult(value=value, method="endpoint-linear", nodes=0, near_one=True)
    level = panel_level(z)
    values, count = _converged_sum(b, c, m, np.array([z]), level)
    panels = 1 if level == 0 else level + 1
    return BetaIntegralResult(
        value=float(values[0]),
        method="gauss-jacobi",
        nodes=count * panels,
        near_one=near_one,
    )


def beta_integral(spec: BetaIntegralSpec) -> float:
    return evaluate_beta_integral(spec).value


def beta_integral_series(spec: BetaIntegralSpec) -> float:
    """B(b, c) * 2F1(-m, b; b + c; z), summed term by term (Euler's integral)."""
    b, c, m, z = spec.b, spec.c, spec.m, spec.z
    if z >= 1.0:
        raise ParameterRangeViolation("The hypergeometric series needs z < 1.")
    term = 1.0
    total = 1.0
    k = 0
    while True:
        term *= (k - m) * (b + k) / ((b + c + k) * (k + 1.0)) * z
        total += term
        k += 1
        if term == 0.0 or abs(term) < SERIES_TERM_RTOL * abs(total):
            break
        if k >= SERIES_MAX_TERMS:
            raise SeriesDiverged(
                f"Series did not settle within {SERIES_MAX_TERMS} terms (z={z} too close to 1)."
            )
    return math.exp(special.betaln(b, c)) * total
