from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from steinvar.constants import CENTERING_TOLERANCE, RANK_TOLERANCE
from steinvar.domain.errors import (
    DataError,
    DegenerateResponse,
    NonPositiveVariance,
    RankDeficient,
)


def center_design(X_raw: np.ndarray) -> np.ndarray:
    X = np.asarray(X_raw, dtype=float)
    if X.ndim == 1:
        X = X[:, np.newaxis]
    if X.shape[0] < 1:
        raise DataError("Design matrix needs at least one row.")
    return X - X.mean(axis=0)


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class RegressionData:
    """Response vector and column-centered design with n > p + 1."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, np.newaxis]
        if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DataError(
                f"Shape mismatch: y has shape {y.shape}, X has shape {X.shape}."
            )
        n, p = X.shape
        if p < 1:
            raise DataError("Design matrix needs at least one column.")
        if n <= p + 1:
            raise DataError(f"Need n > p + 1 observations, got n={n}, p={p}.")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("Data contains non-finite values.")
        column_scale = np.maximum(np.abs(X).max(axis=0), 1.0)
        column_sums = np.abs(X.sum(axis=0))
        if np.any(column_sums > CENTERING_TOLERANCE * n * column_scale):
            raise DataError("Design columns must be centered (use RegressionData.from_raw).")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", _frozen(X))

    @classmethod
    def from_raw(cls, y, X_raw) -> "RegressionData":
        return cls(y=np.asarray(y, dtype=float), X=center_design(X_raw))

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])


@dataclass(frozen=True)
class SufficientStats:
    n: int
    p: int
    rss: float
    total_ss: float
    r_squared: float

    def __post_init__(self) -> None:
        if self.n <= self.p + 1 or self.p < 1:
            raise DataError(f"Need n > p + 1 >= 2, got n={self.n}, p={self.p}.")
        if not (np.isfinite(self.rss) and np.isfinite(self.total_ss)):
            raise DataError("Sums of squares must be finite.")
        if self.rss < 0 or self.total_ss < 0:
            raise DataError("Sums of squares must be non-negative.")
        if self.rss > self.total_ss * (1.0 + 1e-12):
            raise DataError(f"RSS ({self.rss}) exceeds total SS ({self.total_ss}).")
        if not 0.0 <= self.r_squared <= 1.0:
            raise DataError(f"R^2 must lie in [0, 1], got {self.r_squared}.")

    @classmethod
    def from_sums(cls, n: int, p: int, rss: float, total_ss: float) -> "SufficientStats":
        if total_ss <= 0:
            raise DegenerateResponse("Total sum of squares is zero; every estimator is 0/0.")
        r_squared = min(1.0, max(0.0, 1.0 - rss / total_ss))
        return cls(n=n, p=p, rss=float(rss), total_ss=float(total_ss), r_squared=r_squared)

    @property
    def residual_df(self) -> int:
        return self.n - self.p - 1

    @property
    def fitted_ss(self) -> float:
        return self.total_ss - self.rss

    def scaled(self, factor: float) -> "SufficientStats":
        return SufficientStats(
            n=self.n,
            p=self.p,
            rss=self.rss * factor,
            total_ss=self.total_ss * factor,
            r_squared=self.r_squared,
        )


@dataclass(frozen=True)
class NoncentralityPoint:
    xi: float

    def __post_init__(self) -> None:
        if not self.xi >= 0:
            raise DataError(f"Noncentrality must be non-negative, got {self.xi}.")


@dataclass(frozen=True)
class DesignDecomposition:
    """Economic Householder QR of a centered design (q is n x p), reusable across many responses."""

    q: np.ndarray
    r: np.ndarray
    p: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", int(self.r.shape[1]))

    @classmethod
    def of(cls, X: np.ndarray) -> "DesignDecomposition":
        q, r = linalg.qr(np.asarray(X, dtype=float), mode="economic")
        diagonal = np.abs(np.diag(r))
        largest = float(diagonal.max()) if diagonal.size else 0.0
        if largest == 0.0 or float(diagonal.min()) < RANK_TOLERANCE * largest:
            raise RankDeficient(
                f"Centered design has numerical rank below p={r.shape[1]} "
                f"(smallest |R_ii|={diagonal.min():.3g}, largest={largest:.3g})."
            )
        return cls(q=q, r=r)

    def split_sums(self, responses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Fitted and residual sums of squares of centered responses (last axis)."""
        centered = responses - responses.mean(axis=-1, keepdims=True)
        rotated = centered @ self.q
        fitted_ss = np.sum(rotated**2, axis=-1)
        # Residual projection rather than total - fitted keeps rss accurate when R^2 is near 1.
        residual = centered - rotated @ self.q.T
        rss = np.sum(residual**2, axis=-1)
        return fitted_ss, rss


def compute_stats(data: RegressionData) -> SufficientStats:
    decomposition = DesignDecomposition.of(data.X)
    fitted_ss, rss = decomposition.split_sums(data.y)
    fitted_ss = float(fitted_ss)
    rss = float(rss)
    total_ss = fitted_ss + rss
    scale = float(np.max(np.abs(data.y))) if data.n else 0.0
    if total_ss <= (data.n * np.finfo(float).eps * scale) ** 2:
        raise DegenerateResponse("Response is constant: total sum of squares is zero.")
    return SufficientStats(
        n=data.n,
        p=data.p,
        rss=rss,
        total_ss=total_ss,
        r_squared=fitted_ss / total_ss,
    )


def noncentrality(beta, X: np.ndarray, sigma_sq: float) -> NoncentralityPoint:
    if not sigma_sq > 0:
        raise NonPositiveVariance(f"sigma^2 must be positive, got {sigma_sq}.")
    fitted = np.asarray(X, dtype=float) @ np.atleast_1d(np.asarray(beta, dtype=float))
    return NoncentralityPoint(xi=float(fitted @ fitted) / sigma_sq)
