"""Closed-form Renyi divergences between Gaussians and between Beta distributions.

Orders are taken in (0, 1). ``alpha = 1`` dispatches to the KL divergence and
``alpha = 0`` returns 0; nothing is extrapolated beyond [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import betaln, digamma

from .core import Order
from .errors import DegenerateMixtureError, InvalidArgumentError

__all__ = [
    "GaussianDist",
    "BetaDist",
    "renyi_gaussian",
    "renyi_beta",
    "kl_gaussian",
    "kl_beta",
]


def _cholesky(cov: np.ndarray, what: str = "covariance") -> np.ndarray:
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise InvalidArgumentError(f"{what} is not positive definite") from exc


def _logdet_from_chol(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


@dataclass(frozen=True, eq=False)
class GaussianDist:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise InvalidArgumentError(
                f"covariance shape {cov.shape} does not match mean of size {mean.size}"
            )
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10):
            raise InvalidArgumentError("covariance is not symmetric")
        chol = _cholesky(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    def logdet(self) -> float:
        return _logdet_from_chol(self._chol)

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        diff = x - self.mean
        z = linalg.solve_triangular(self._chol, diff.reshape(-1, self.dim).T, lower=True)
        quad = np.sum(z**2, axis=0).reshape(x.shape[:-1])
        return -0.5 * (quad + self.dim * np.log(2.0 * np.pi) + self.logdet())

    def __eq__(self, other):
        if not isinstance(other, GaussianDist):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    __hash__ = None

    def __repr__(self):
        return f"GaussianDist(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True)
class BetaDist:
    delta: float
    gamma: float

    def __post_init__(self):
        if not (self.delta > 0.0 and self.gamma > 0.0):
            raise InvalidArgumentError(
                f"Beta shapes must be positive, got ({self.delta!r}, {self.gamma!r})"
            )
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "gamma", float(self.gamma))

    def mean(self) -> float:
        return self.delta / (self.delta + self.gamma)

    def log_beta(self) -> float:
        return float(betaln(self.delta, self.gamma))


# Below this distance from alpha = 1 the 1 / (1 - alpha) forms lose all
# precision to cancellation; interpolate to the exact alpha = 1 limit instead.
NEAR_ONE = 1e-5


def near_one(a: float, direct, at_one) -> float:
    """Evaluate ``direct(a)``, or blend toward ``at_one()`` when ``1 - a < NEAR_ONE``."""
    gap = 1.0 - a
    if gap >= NEAR_ONE:
        return direct(a)
    if gap == 0.0:
        return at_one()
    w = gap / NEAR_ONE
    return w * direct(1.0 - NEAR_ONE) + (1.0 - w) * at_one()


def _order_value(order) -> float:
    a = order.alpha if isinstance(order, Order) else float(order)
    if not 0.0 <= a <= 1.0:
        raise InvalidArgumentError(f"Renyi order must lie in [0, 1], got {a!r}")
    return a


def kl_gaussian(q: GaussianDist, p: GaussianDist) -> float:
    """KL(q || p) for multivariate Gaussians."""
    if q.dim != p.dim:
        raise InvalidArgumentError(f"dimension mismatch: {q.dim} vs {p.dim}")
    if q == p:
        return 0.0
    d = q.dim
    a = linalg.solve_triangular(p.chol, q.chol, lower=True)
    trace = float(np.sum(a**2))
    z = linalg.solve_triangular(p.chol, q.mean - p.mean, lower=True)
    maha = float(z @ z)
    value = 0.5 * (trace + maha - d + p.logdet() - q.logdet())
    return max(value, 0.0)


def renyi_gaussian(q: GaussianDist, p: GaussianDist, order) -> float:
    """Renyi divergence D_alpha[q || p] between Gaussians.

    The mixture-precision form is rearranged through
    ``alpha * inv(Sq) + (1 - alpha) * inv(Sp) = inv(Sq) M inv(Sp)`` with
    ``M = alpha * Sp + (1 - alpha) * Sq`` so that only ``M`` is factorised and
    the quadratic term is a nonnegative Mahalanobis distance.
    """
    if q.dim != p.dim:
        raise InvalidArgumentError(f"dimension mismatch: {q.dim} vs {p.dim}")
    a = _order_value(order)
    if a == 0.0 or q == p:
        return 0.0
    return near_one(a, lambda b: _renyi_gaussian(q, p, b), lambda: kl_gaussian(q, p))


def _renyi_gaussian(q: GaussianDist, p: GaussianDist, a: float) -> float:
    mix = a * p.cov + (1.0 - a) * q.cov
    chol = _cholesky(mix, "mixture covariance")
    z = linalg.solve_triangular(chol, q.mean - p.mean, lower=True)
    quad = 0.5 * a * float(z @ z)
    logdet = _logdet_from_chol(chol) - (1.0 - a) * q.logdet() - a * p.logdet()
    value = quad + logdet / (2.0 * (1.0 - a))
    return max(value, 0.0)


def kl_beta(q: BetaDist, p: BetaDist) -> float:
    if q == p:
        return 0.0
    dq, gq, dp, gp = q.delta, q.gamma, p.delta, p.gamma
    value = (
        betaln(dp, gp)
        - betaln(dq, gq)
        + (dq - dp) * digamma(dq)
        + (gq - gp) * digamma(gq)
        + (dp - dq + gp - gq) * digamma(dq + gq)
    )
    return max(float(value), 0.0)


def renyi_beta(q: BetaDist, p: BetaDist, order) -> float:
    """Renyi divergence D_alpha[q || p] between Beta distributions, via log-Beta."""
    a = _order_value(order)
    if a == 0.0 or q == p:
        return 0.0
    return near_one(a, lambda b: _renyi_beta(q, p, b), lambda: kl_beta(q, p))


def _renyi_beta(q: BetaDist, p: BetaDist, a: float) -> float:
    d_mix = a * (q.delta - 1.0) + (1.0 - a) * (p.delta - 1.0) + 1.0
    g_mix = a * (q.gamma - 1.0) + (1.0 - a) * (p.gamma - 1.0) + 1.0
    if d_mix <= 0.0 or g_mix <= 0.0:
        raise DegenerateMixtureError(
            f"mixture shapes ({d_mix:.6g}, {g_mix:.6g}) are not positive; divergence is infinite"
        )
    log_integral = betaln(d_mix, g_mix) - a * q.log_beta() - (1.0 - a) * p.log_beta()
    return max(float(log_integral / (a - 1.0)), 0.0)
