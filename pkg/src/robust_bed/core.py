"""Shared numeric primitives: misspecification order, log-sum-exp, seeds, beta calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgumentError, LimitUndefinedError

__all__ = [
    "Order",
    "RegularityConstants",
    "Seed",
    "as_alpha",
    "log_sum_exp",
    "beta_from_alpha",
    "alpha_from_beta",
    "calibrate_beta",
    "derive_rng",
]


@dataclass(frozen=True)
class Order:
    """Misspecification order ``alpha`` in (0, 1].

    ``alpha = 1`` is the Shannon (well-specified) limit; the dual multiplier
    ``beta`` is then infinite.
    """

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 < a <= 1.0) or math.isnan(a):
            raise InvalidArgumentError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    @property
    def is_shannon(self) -> bool:
        return self.alpha == 1.0

    def beta(self) -> float:
        if self.alpha == 1.0:
            return math.inf
        return self.alpha / (1.0 - self.alpha)

    @classmethod
    def from_beta(cls, beta: float) -> "Order":
        return cls(alpha_from_beta(beta))


def as_alpha(order: Order | float) -> float:
    """Accept an ``Order`` or a bare float and return the validated alpha."""
    if isinstance(order, Order):
        return order.alpha
    return Order(order).alpha


@dataclass(frozen=True)
class RegularityConstants:
    """Regularity and boundedness constants of the nested estimator.

    They are never instantiated by theory for a concrete model, so callers
    supply them.
    """

    L_f: float = 1.0
    L_h: float = 1.0
    C_h: float = 1.0
    sigma_h: float = 1.0
    sigma_w: float = 1.0
    L_w: float = 1.0
    C_w: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        for name in ("L_f", "L_h", "C_h", "sigma_h", "sigma_w", "L_w", "C_w", "tau"):
            value = getattr(self, name)
            if not value >= 0.0:
                raise InvalidArgumentError(f"{name} must be nonnegative, got {value!r}")
        if not self.tau > 0.0:
            raise InvalidArgumentError("tau must be positive")


@dataclass(frozen=True)
class Seed:
    root: int

    def __post_init__(self):
        if not 0 <= int(self.root) < 2**64:
            raise InvalidArgumentError("seed root must be a 64-bit unsigned integer")
        object.__setattr__(self, "root", int(self.root))

    def rng(self, *keys: int) -> np.random.Generator:
        return derive_rng(self.root, *keys)


def derive_rng(root: int | Seed, *keys: int) -> np.random.Generator:
    """Independent generator that is a pure function of ``(root, *keys)``.

    Uses the SeedSequence spawn-key mechanism so that streams for different
    keys never depend on the order in which they are requested.
    """
    if isinstance(root, Seed):
        root = root.root
    seq = np.random.SeedSequence(int(root), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def log_sum_exp(values) -> float:
    """``log(sum(exp(values)))`` with max-shifting.

    Entries may be ``-inf``; NaN entries and empty input are rejected.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise InvalidArgumentError("log_sum_exp of an empty list")
    if np.isnan(v).any():
        raise InvalidArgumentError("log_sum_exp received NaN")
    return float(logsumexp(v))


def beta_from_alpha(order: Order | float) -> float:
    a = as_alpha(order)
    if a == 1.0:
        raise LimitUndefinedError("beta is infinite at alpha = 1")
    return a / (1.0 - a)


def alpha_from_beta(beta: float) -> float:
    if not beta > 0.0:
        raise InvalidArgumentError(f"beta must be positive, got {beta!r}")
    if math.isinf(beta):
        return 1.0
    return beta / (1.0 + beta)


def calibrate_beta(
    model_mi: Callable[[float], float], rho: float, grid: Sequence[float]
) -> tuple[float, float]:
    """Grid search for the dual multiplier of a KL misspecification budget.

    Maximises ``model_mi(beta) - beta * rho`` over ``grid``; ties go to the
    smallest beta.

    Parameters
    ----------
    model_mi : callable
        Maps ``beta`` to the robust information gain at order
        ``beta / (1 + beta)`` for a fixed design.
    rho : float
        Misspecification budget, > 0.
    grid : sequence of float
        Positive, ascending candidate values of beta.

    Returns
    -------
    (beta_star, value)
    """
    if not rho > 0.0:
        raise InvalidArgumentError(f"rho must be positive, got {rho!r}")
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise InvalidArgumentError("grid must be a non-empty list")
    if np.any(g <= 0.0) or not np.all(np.isfinite(g)):
        raise InvalidArgumentError("grid entries must be positive and finite")
    if np.any(np.diff(g) <= 0.0):
        raise InvalidArgumentError("grid must be strictly ascending")
    objective = np.array([float(model_mi(float(b))) - float(b) * rho for b in g])
    k = int(np.argmax(objective))  # first maximiser == smallest beta
    return float(g[k]), float(objective[k])
