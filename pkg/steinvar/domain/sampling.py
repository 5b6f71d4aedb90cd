import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from steinvar.constants import BLOCK_SIZE
from steinvar.domain.errors import (
    DataError,
    InconsistentXi,
    InvalidMixingLaw,
    NonPositiveVariance,
)
from steinvar.domain.regression import (
    RegressionData,
    SufficientStats,
    center_design,
    noncentrality,
)

ALGORITHMS = {
    "bit_generator": "Philox4x64-10",
    "stream_seeding": "SeedSequence(seed, spawn_key=(block,))",
    "normal": "numpy ziggurat",
    "gamma": "numpy Marsaglia-Tsang",
    "noncentral_chisquare": "chisquare(p-1) + (Z + sqrt(nc))^2",
    "numpy_version": np.__version__,
}


class MixingKind(enum.Enum):
    POINT_MASS = "gauss"
    INVERSE_GAMMA_T = "t"
    TWO_POINT = "two"


@dataclass(frozen=True)
class MixingLaw:
    """Law of tau^2 with E[tau^2] = 1; errors are N(0, tau^2 I) given tau."""

    kind: MixingKind
    nu: float | None = None
    v1: float | None = None
    v2: float | None = None
    w: float | None = None

    def __post_init__(self) -> None:
        if self.kind is MixingKind.INVERSE_GAMMA_T:
            if self.nu is None or not self.nu > 2:
                raise InvalidMixingLaw(f"Inverse-gamma mixing needs nu > 2, got {self.nu}.")
        elif self.kind is MixingKind.TWO_POINT:
            if self.v1 is None or self.v2 is None or self.w is None:
                raise InvalidMixingLaw("Two-point mixing needs v1, v2 and w.")
            if not (self.v1 > 0 and self.v2 > 0 and 0 < self.w < 1):
                raise InvalidMixingLaw(
                    f"Two-point mixing needs v1, v2 > 0 and w in (0, 1), got {self.v1}, {self.v2}, {self.w}."
                )
            mean = self.w * self.v1 + (1 - self.w) * self.v2
            if abs(mean - 1.0) > 1e-12:
                raise InvalidMixingLaw(f"Two-point mixing must have E[tau^2] = 1, got {mean!r}.")

    @classmethod
    def point_mass(cls) -> "MixingLaw":
        return cls(MixingKind.POINT_MASS)

    @classmethod
    def inverse_gamma_t(cls, nu: float) -> "MixingLaw":
        return cls(MixingKind.INVERSE_GAMMA_T, nu=float(nu))

    @classmethod
    def two_point(cls, v1: float, v2: float, w: float) -> "MixingLaw":
        return cls(MixingKind.TWO_POINT, v1=float(v1), v2=float(v2), w=float(w))

    @classmethod
    def parse(cls, text: str) -> "MixingLaw":
        """gauss | t:<nu> | two:<v1>,<v2>,<w> (fractions such as 2/3 allowed)."""
        head, _, tail = text.strip().partition(":")
        head = head.strip().lower()
        try:
            values = [float(Fraction(part.split("=")[-1].strip())) for part in tail.split(",") if part.strip()]
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidMixingLaw(f"Invalid mixing law '{text}'.") from exc
        if head in {"gauss", "gaussian", "normal", "point"} and not values:
            return cls.point_mass()
        if head == "t" and len(values) == 1:
            return cls.inverse_gamma_t(values[0])
        if head == "two" and len(values) == 3:
            return cls.two_point(*values)
        raise InvalidMixingLaw(
            f"Unknown mixing law '{text}' (expected gauss, t:<nu> or two:<v1>,<v2>,<w>)."
        )

    @property
    def label(self) -> str:
        if self.kind is MixingKind.INVERSE_GAMMA_T:
            return f"t:{self.nu:g}"
        if self.kind is MixingKind.TWO_POINT:
            return f"two:{self.v1!r},{self.v2!r},{self.w!r}"
        return "gauss"

    def as_dict(self) -> dict:
        payload: dict = {"kind": self.kind.value}
        for key in ("nu", "v1", "v2", "w"):
            value = getattr(self, key)
            if value is not None:
                payload[key] = value
        return payload

    def support(self) -> list[tuple[float, float]]:
        """(tau^2, probability) atoms for discrete laws; empty for continuous ones."""
        if self.kind is MixingKind.POINT_MASS:
            return [(1.0, 1.0)]
        if self.kind is MixingKind.TWO_POINT:
            return [(self.v1, self.w), (self.v2, 1.0 - self.w)]
        return []

    def density(self, tau_sq: float) -> float:
        if self.kind is not MixingKind.INVERSE_GAMMA_T:
            raise InvalidMixingLaw(f"Mixing law {self.label} has no density.")
        shape = self.nu / 2.0
        scale = (self.nu - 2.0) / 2.0
        log_density = (
            shape * math.log(scale)
            - math.lgamma(shape)
            - (shape + 1.0) * math.log(tau_sq)
            - scale / tau_sq
        )
        return math.exp(log_density)


def sample_tau_sq(law: MixingLaw, rng: np.random.Generator, size: int | None = None):
    if law.kind is MixingKind.POINT_MASS:
        return 1.0 if size is None else np.ones(size)
    if law.kind is MixingKind.INVERSE_GAMMA_T:
        scale = (law.nu - 2.0) / 2.0
        return scale / rng.standard_gamma(law.nu / 2.0, size)
    picks = rng.random(size)
    return np.where(picks < law.w, law.v1, law.v2) if size is not None else (law.v1 if picks < law.w else law.v2)


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    xi: float
    sigma_sq: float
    mixing: MixingLaw
    seed: int
    replicates: int

    def __post_init__(self) -> None:
        if self.p < 1 or self.n <= self.p + 1:
            raise DataError(f"Need n > p + 1 and p >= 1, got n={self.n}, p={self.p}.")
        if not self.xi >= 0:
            raise DataError(f"Noncentrality must be non-negative, got {self.xi}.")
        if not self.sigma_sq > 0:
            raise NonPositiveVariance(f"sigma^2 must be positive, got {self.sigma_sq}.")
        if self.replicates < 1:
            raise DataError(f"Need at least one replicate, got {self.replicates}.")

    def with_seed(self, seed: int) -> "SimConfig":
        return SimConfig(self.n, self.p, self.xi, self.sigma_sq, self.mixing, seed, self.replicates)


@dataclass(frozen=True)
class StatsBlock:
    rss: np.ndarray
    total_ss: np.ndarray
    r_squared: np.ndarray


def block_generator(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream owned by one replicate block, independent of workers."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(sequence))


def replicate_blocks(replicates: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    full, rest = divmod(replicates, block_size)
    blocks = [(index, block_size) for index in range(full)]
    if rest:
        blocks.append((full, rest))
    return blocks


def draw_stats_block(config: SimConfig, rng: np.random.Generator, size: int) -> StatsBlock:
    tau_sq = sample_tau_sq(config.mixing, rng, size)
    central = rng.chisquare(config.p - 1, size) if config.p > 1 else np.zeros(size)
    shift = rng.standard_normal(size) + np.sqrt(config.xi / tau_sq)
    fitted = central + shift * shift
    residual = rng.chisquare(config.n - config.p - 1, size)
    scale = config.sigma_sq * tau_sq
    total = fitted + residual
    return StatsBlock(rss=scale * residual, total_ss=scale * total, r_squared=fitted / total)


def sample_stats_direct(config: SimConfig, rng: np.random.Generator) -> SufficientStats:
    block = draw_stats_block(config, rng, 1)
    return SufficientStats(
        n=config.n,
        p=config.p,
        rss=float(block.rss[0]),
        total_ss=float(block.total_ss[0]),
        r_squared=float(block.r_squared[0]),
    )


def sample_errors(law: MixingLaw, rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Rows of spherically symmetric errors: tau * standard normal n-vector."""
    tau = np.sqrt(sample_tau_sq(law, rng, size))
    return tau[:, np.newaxis] * rng.standard_normal((size, n))


def check_xi(config: SimConfig, X: np.ndarray, beta) -> None:
    realized = noncentrality(beta, X, config.sigma_sq).xi
    if abs(realized - config.xi) > 1e-9 * max(1.0, config.xi):
        raise InconsistentXi(
            f"beta and X give xi={realized!r}, but the configuration says xi={config.xi!r}."
        )


def draw_full_block(
    config: SimConfig,
    X: np.ndarray,
    beta,
    alpha: float,
    rng: np.random.Generator,
    size: int,
) -> np.ndarray:
    mean = alpha + np.asarray(X, dtype=float) @ np.atleast_1d(np.asarray(beta, dtype=float))
    return mean + math.sqrt(config.sigma_sq) * sample_errors(config.mixing, rng, config.n, size)


def sample_data_full(
    config: SimConfig,
    X: np.ndarray,
    beta,
    alpha: float,
    rng: np.random.Generator,
) -> RegressionData:
    check_xi(config, X, beta)
    y = draw_full_block(config, X, beta, alpha, rng, 1)[0]
    return RegressionData(y=y, X=X)


def realize_design(
    n: int,
    p: int,
    xi: float,
    sigma_sq: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Random centered design and coefficients with beta'X'X beta / sigma^2 = xi."""
    X = center_design(rng.standard_normal((n, p)))
    direction = rng.standard_normal(p)
    fitted = X @ direction
    norm_sq = float(fitted @ fitted)
    beta = direction * math.sqrt(xi * sigma_sq / norm_sq) if xi > 0 else np.zeros(p)
    return X, beta
