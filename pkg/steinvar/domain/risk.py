import enum
import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from steinvar.constants import (
    BLOCK_SIZE,
    POISSON_TAIL_PAD,
    POISSON_TAIL_SPREAD,
    VERDICT_STD_ERRS,
)
from steinvar.domain.errors import ChallengerNotPhiForm, DataError
from steinvar.domain.estimators import (
    EstimatorKind,
    EstimatorSpec,
    check_phi_monotone,
    stein_loss,
)
from steinvar.domain.regression import DesignDecomposition
from steinvar.domain.sampling import (
    MixingKind,
    MixingLaw,
    SimConfig,
    StatsBlock,
    block_generator,
    check_xi,
    draw_full_block,
    draw_stats_block,
    replicate_blocks,
)

simulation_logger = logging.getLogger("simulation")


@dataclass(frozen=True)
class Moments:
    """Count, mean and centered second moment; merged with Chan's pairwise update."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        deviations = values - mean
        return cls(count=int(values.size), mean=mean, m2=float(deviations @ deviations))

    def merge(self, other: "Moments") -> "Moments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / count
        return Moments(count=count, mean=mean, m2=m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else math.inf

    @property
    def std_err(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else math.inf


def merge_tree(parts: Sequence[Moments]) -> Moments:
    """Merge in a fixed binary tree over block order so results ignore worker count."""
    if not parts:
        return Moments()
    if len(parts) == 1:
        return parts[0]
    middle = len(parts) // 2
    return merge_tree(parts[:middle]).merge(merge_tree(parts[middle:]))


@dataclass(frozen=True)
class RiskPoint:
    xi: float
    risk: float
    std_err: float
    replicates: int


@dataclass(frozen=True)
class RiskCurve:
    estimator: EstimatorSpec
    mixing: MixingLaw
    n: int
    p: int
    points: tuple[RiskPoint, ...] = ()

    def rows(self) -> list[tuple[float, float, float, int]]:
        return [(point.xi, point.risk, point.std_err, point.replicates) for point in self.points]


class Verdict(enum.Enum):
    DOMINATES_WITHIN_MC = "DominatesWithinMC"
    INCONCLUSIVE = "Inconclusive"
    VIOLATION_DETECTED = "ViolationDetected"


@dataclass(frozen=True)
class PairedPoint:
    xi: float
    mixing: str
    delta: float
    std_err: float
    unpaired_std_err: float
    baseline_risk: float
    challenger_risk: float
    replicates: int


@dataclass(frozen=True)
class DominanceReport:
    baseline: EstimatorSpec
    challenger: EstimatorSpec
    points: tuple[PairedPoint, ...]
    verdict: Verdict
    threshold: float = VERDICT_STD_ERRS
    certified: bool = False
    exact: tuple[float, ...] = field(default=())

    def as_dict(self) -> dict:
        payload = {
            "baseline": self.baseline.label,
            "challenger": self.challenger.label,
            "verdict": self.verdict.value,
            "threshold_std_errs": self.threshold,
            "certified": self.certified,
            "points": [
                {
                    "xi": point.xi,
                    "mixing": point.mixing,
                    "delta": point.delta,
                    "std_err": point.std_err,
                    "unpaired_std_err": point.unpaired_std_err,
                    "baseline_risk": point.baseline_risk,
                    "challenger_risk": point.challenger_risk,
                    "replicates": point.replicates,
                }
                for point in self.points
            ],
        }
        if self.exact:
            payload["exact_delta"] = list(self.exact)
        return payload


def derive_seed(seed: int, index: int) -> int:
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(0xC0FFEE, int(index)))
    return int(sequence.generate_state(1, np.uint64)[0])


def _block_losses(
    specs: Sequence[EstimatorSpec],
    config: SimConfig,
    block: StatsBlock,
) -> list[np.ndarray]:
    return [
        stein_loss(spec.values(block.rss, block.total_ss, config.n, config.p), config.sigma_sq)
        for spec in specs
    ]


def _run_blocks(
    config: SimConfig,
    worker: Callable[[int, int], list[Moments]],
    workers: int | None,
) -> list[Moments]:
    blocks = replicate_blocks(config.replicates, BLOCK_SIZE)
    if workers is None or workers <= 1 or len(blocks) <= 1:
        results = [worker(index, size) for index, size in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda item: worker(*item), blocks))
    return [merge_tree([result[slot] for result in results]) for slot in range(len(results[0]))]


def _paired_moments(
    specs: Sequence[EstimatorSpec],
    config: SimConfig,
    workers: int | None,
) -> list[Moments]:
    """Moments of each spec's loss, then of loss[0] - loss[k] for k >= 1, on shared draws."""

    def worker(index: int, size: int) -> list[Moments]:
        rng = block_generator(config.seed, index)
        losses = _block_losses(specs, config, draw_stats_block(config, rng, size))
        parts = [Moments.of(loss) for loss in losses]
        parts.extend(Moments.of(losses[0] - loss) for loss in losses[1:])
        return parts

    return _run_blocks(config, worker, workers)


def estimate_risk(spec: EstimatorSpec, config: SimConfig, workers: int | None = None) -> RiskPoint:
    spec.validate(config.n, config.p)
    (moments,) = _paired_moments([spec], config, workers)
    point = RiskPoint(
        xi=config.xi,
        risk=moments.mean,
        std_err=moments.std_err,
        replicates=moments.count,
    )
    simulation_logger.info(
        "risk estimator=%s mixing=%s xi=%g risk=%.7f std_err=%.2e replicates=%d",
        spec.label,
        config.mixing.label,
        point.xi,
        point.risk,
        point.std_err,
        point.replicates,
    )
    return point


def estimate_risk_full(
    spec: EstimatorSpec,
    config: SimConfig,
    X: np.ndarray,
    beta,
    alpha: float,
    workers: int | None = None,
) -> RiskPoint:
    """Risk from full response vectors y = alpha 1 + X beta + sigma tau z."""
    spec.validate(config.n, config.p)
    check_xi(config, X, beta)
    decomposition = DesignDecomposition.of(X)

    def worker(index: int, size: int) -> list[Moments]:
        rng = block_generator(config.seed, index)
        responses = draw_full_block(config, X, beta, alpha, rng, size)
        fitted_ss, rss = decomposition.split_sums(responses)
        total = fitted_ss + rss
        block = StatsBlock(rss=rss, total_ss=total, r_squared=fitted_ss / total)
        return [Moments.of(loss) for loss in _block_losses([spec], config, block)]

    (moments,) = _run_blocks(config, worker, workers)
    return RiskPoint(xi=config.xi, risk=moments.mean, std_err=moments.std_err, replicates=moments.count)


def risk_grid(
    spec: EstimatorSpec,
    mixing: MixingLaw,
    n: int,
    p: int,
    xi_grid: Sequence[float],
    replicates: int,
    seed: int,
    sigma_sq: float = 1.0,
    workers: int | None = None,
) -> RiskCurve:
    points = []
    for index, xi in sorted(enumerate(xi_grid), key=lambda item: item[1]):
        config = SimConfig(n, p, float(xi), sigma_sq, mixing, derive_seed(seed, index), replicates)
        points.append(estimate_risk(spec, config, workers))
    return RiskCurve(estimator=spec, mixing=mixing, n=n, p=p, points=tuple(points))


def _verdict(points: Sequence[PairedPoint], threshold: float) -> Verdict:
    if any(point.delta < -threshold * point.std_err for point in points):
        return Verdict.VIOLATION_DETECTED
    if any(point.delta > threshold * point.std_err for point in points):
        return Verdict.DOMINATES_WITHIN_MC
    return Verdict.INCONCLUSIVE


def certify_phi_form(challenger: EstimatorSpec, configs: Sequence[SimConfig]) -> None:
    if not challenger.is_phi_form:
        raise ChallengerNotPhiForm(
            f"Certified runs need an estimator of the form phi(R^2) * RSS / (n-p-1); "
            f"{challenger.label} is not."
        )
    for n, p in sorted({(config.n, config.p) for config in configs}):
        check_phi_monotone(challenger, n, p)


def compare_paired(
    baseline: EstimatorSpec,
    challenger: EstimatorSpec,
    configs: Sequence[SimConfig],
    certified: bool = False,
    threshold: float = VERDICT_STD_ERRS,
    workers: int | None = None,
) -> DominanceReport:
    if not configs:
        raise DataError("compare_paired needs at least one simulation configuration.")
    if certified:
        certify_phi_form(challenger, configs)
    points = []
    for config in sorted(configs, key=lambda item: (item.mixing.label, item.xi)):
        baseline.validate(config.n, config.p)
        challenger.validate(config.n, config.p)
        base, chal, diff = _paired_moments([baseline, challenger], config, workers)
        point = PairedPoint(
            xi=config.xi,
            mixing=config.mixing.label,
            delta=diff.mean,
            std_err=diff.std_err,
            unpaired_std_err=math.hypot(base.std_err, chal.std_err),
            baseline_risk=base.mean,
            challenger_risk=chal.mean,
            replicates=diff.count,
        )
        simulation_logger.info(
            "paired baseline=%s challenger=%s mixing=%s xi=%g delta=%.3e std_err=%.2e",
            baseline.label,
            challenger.label,
            point.mixing,
            point.xi,
            point.delta,
            point.std_err,
        )
        points.append(point)
    verdict = _verdict(points, threshold)
    simulation_logger.info(
        "verdict baseline=%s challenger=%s verdict=%s",
        baseline.label,
        challenger.label,
        verdict.value,
    )
    return DominanceReport(
        baseline=baseline,
        challenger=challenger,
        points=tuple(points),
        verdict=verdict,
        threshold=threshold,
        certified=certified,
    )


def unbiased_risk(n: int, p: int, mixing: MixingLaw) -> float:
    """Exact Stein-loss risk of RSS/(n-p-1); constant in xi."""
    k = n - p - 1
    gaussian = math.log(k) - special.digamma(k / 2.0) - math.log(2.0)
    if mixing.kind is MixingKind.INVERSE_GAMMA_T:
        mean_log_tau = math.log((mixing.nu - 2.0) / 2.0) - special.digamma(mixing.nu / 2.0)
    else:
        mean_log_tau = sum(weight * math.log(value) for value, weight in mixing.support())
    return gaussian - mean_log_tau


class _BetaExpectations:
    """E[g(B)] for B ~ Beta((p+2K)/2, (n-p-1)/2) on a fixed composite Gauss-Legendre grid.

    With B = sin^2(theta) every Beta density in the family is bounded in theta,
    so phi only has to be evaluated once on the grid.
    """

    PANELS = 8
    NODES = 64

    def __init__(self, phi_values: Callable[[np.ndarray], np.ndarray], n: int, p: int, breaks=()) -> None:
        edges = np.linspace(0.0, math.pi / 2.0, self.PANELS + 1)
        edges = np.unique(np.concatenate([edges, np.asarray(list(breaks), dtype=float)]))
        x, w = special.roots_legendre(self.NODES)
        halves = np.diff(edges) / 2.0
        centers = (edges[:-1] + edges[1:]) / 2.0
        self.theta = (centers[:, np.newaxis] + halves[:, np.newaxis] * x).ravel()
        self.weights = (halves[:, np.newaxis] * w).ravel()
        self.b = np.sin(self.theta) ** 2
        self.n = n
        self.p = p
        phi = np.asarray(phi_values(self.b), dtype=float)
        self.shrink = (1.0 - phi) * (1.0 - self.b)
        self.log_phi = np.log(phi)

    def moments(self, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        shape_a = (self.p + 2.0 * counts)[:, np.newaxis] / 2.0
        shape_b = (self.n - self.p - 1) / 2.0
        with np.errstate(divide="ignore"):
            log_density = (
                math.log(2.0)
                + (2.0 * shape_a - 1.0) * np.log(np.sin(self.theta))
                + (2.0 * shape_b - 1.0) * np.log(np.cos(self.theta))
                - special.betaln(shape_a, shape_b)
            )
        mass = np.exp(log_density) * self.weights
        return mass @ self.shrink, mass @ self.log_phi


def _poisson_terms(mean: float) -> tuple[np.ndarray, np.ndarray]:
    if mean == 0.0:
        return np.zeros(1), np.ones(1)
    # Tails beyond mean +- spread carry less than 1e-20 of the mass for every mean.
    spread = POISSON_TAIL_SPREAD * math.sqrt(mean) + POISSON_TAIL_PAD
    lower = max(0, math.floor(mean - spread))
    upper = math.ceil(mean + spread)
    counts = np.arange(lower, upper + 1, dtype=float)
    return counts, stats.poisson.pmf(counts, mean)


def _stein_break(spec: EstimatorSpec | None, n: int, p: int) -> tuple[float, ...]:
    if spec is None or spec.kind is not EstimatorKind.STEIN:
        return ()
    kink = 1.0 - (n - p - 1) / (n - 1)
    return (math.asin(math.sqrt(kink)),)


def _conditional_difference(
    table: _BetaExpectations,
    xi: float,
    tau_sq: float,
    weight_tau: bool,
) -> float:
    counts, weights = _poisson_terms(xi / (2.0 * tau_sq))
    shrink, log_phi = table.moments(counts)
    factor = tau_sq if weight_tau else 1.0
    n, p = table.n, table.p
    terms = factor * (n - 1 + 2.0 * counts) / (n - p - 1) * shrink + log_phi
    return float(weights @ terms)


def _mixture_average(mixing: MixingLaw, integrand: Callable[[float], float]) -> float:
    atoms = mixing.support()
    if atoms:
        return sum(weight * integrand(value) for value, weight in atoms)

    def transformed(u: float) -> float:
        tau_sq = u / (1.0 - u)
        density = mixing.density(tau_sq)
        if density == 0.0:
            return 0.0
        return integrand(tau_sq) * density / (1.0 - u) ** 2

    value, _ = integrate.quad(transformed, 0.0, 1.0, epsabs=1e-13, epsrel=1e-10, limit=200)
    return value


def _phi_table(phi, n: int, p: int) -> _BetaExpectations:
    if isinstance(phi, EstimatorSpec):
        spec = phi
        if not spec.is_phi_form:
            raise ChallengerNotPhiForm(f"{spec.label} has no phi(R^2) representation.")
        return _BetaExpectations(lambda r2: spec.phi(r2, n, p), n, p, _stein_break(spec, n, p))
    return _BetaExpectations(phi, n, p)


def risk_difference_exact(phi, n: int, p: int, xi: float, mixing: MixingLaw) -> float:
    """Deterministic R(delta_U) - R(delta_phi) at noncentrality xi.

    Conditions on tau^2 and a Poisson(xi / (2 tau^2)) count K, under which
    R^2 is Beta((p+2K)/2, (n-p-1)/2) and independent of the total chi-square.
    """
    table = _phi_table(phi, n, p)
    return _mixture_average(mixing, lambda tau_sq: _conditional_difference(table, xi, tau_sq, True))


def gaussian_lower_bound(phi, n: int, p: int, xi: float, mixing: MixingLaw) -> float:
    """E over tau of the Gaussian risk difference at xi / tau^2; never above the exact value."""
    table = _phi_table(phi, n, p)
    return _mixture_average(mixing, lambda tau_sq: _conditional_difference(table, xi, tau_sq, False))


def noncentral_monotonicity(psi: Callable, k: int, lam: float, taus: Sequence[float]) -> np.ndarray:
    """E[psi(chi^2_k(lam / tau))] for each tau; decreasing in tau when psi increases."""
    values = []
    for tau in taus:
        distribution = stats.ncx2(k, lam / tau)
        value, _ = integrate.quad(
            lambda x: psi(x) * distribution.pdf(x), 0.0, np.inf, epsabs=1e-12, epsrel=1e-10, limit=200
        )
        values.append(value)
    return np.array(values)
