"""Stochastic design policies and the PAC-Bayes machinery around them.

Discrete design spaces use the exact Gibbs policy ``pi ~ pi0 * exp(lam * I)``,
which maximises ``E_pi[I] - KL(pi || pi0) / lam`` over the simplex.
Continuous boxes use a diagonal Gaussian policy whose draws are clipped to
the box, trained by score-function ascent on the same regularised objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import RegularityConstants, derive_rng
from .errors import EstimationFailedError, InfiniteKLError, InvalidArgumentError

__all__ = [
    "DiscretePolicy",
    "BoxedGaussianPolicy",
    "PacConfig",
    "gibbs_update",
    "pac_objective",
    "pac_lower_bound",
    "kl_policies",
    "mirror_descent",
    "entropic_mirror_descent",
]

_NORM_TOL = 1e-12


def _keys(seed) -> tuple[int, ...]:
    return tuple(int(k) for k in np.atleast_1d(seed))


def _design_key(design):
    return tuple(np.ravel(np.asarray(design)).tolist())


@dataclass(frozen=True, eq=False)
class DiscretePolicy:
    """Categorical distribution over a finite list of designs."""

    support: tuple
    log_probs: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        lp = np.asarray(self.log_probs, dtype=float).ravel()
        if not support:
            raise InvalidArgumentError("policy support is empty")
        if lp.size != len(support):
            raise InvalidArgumentError(
                f"{lp.size} log-probabilities for a support of {len(support)} designs")
        if len({_design_key(d) for d in support}) != len(support):
            raise InvalidArgumentError("policy support contains duplicate designs")
        if np.isnan(lp).any() or np.isposinf(lp).any():
            raise InvalidArgumentError("log-probabilities must be finite or -inf")
        if abs(math.fsum(np.exp(lp)) - 1.0) > _NORM_TOL:
            raise InvalidArgumentError("probabilities do not sum to 1")
        lp.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "log_probs", lp)

    @classmethod
    def uniform(cls, support: Sequence) -> "DiscretePolicy":
        n = len(support)
        if n == 0:
            raise InvalidArgumentError("policy support is empty")
        return cls(tuple(support), np.full(n, -math.log(n)))

    @classmethod
    def from_weights(cls, support: Sequence, log_weights) -> "DiscretePolicy":
        lw = np.asarray(log_weights, dtype=float)
        return cls(tuple(support), lw - logsumexp(lw))

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def expectation(self, values) -> float:
        v = np.asarray(values, dtype=float)
        if v.shape != self.log_probs.shape:
            raise InvalidArgumentError("values do not match the policy support")
        p = self.probs
        mask = p > 0.0
        return float(np.sum(p[mask] * v[mask]))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Indices into ``support``."""
        return rng.choice(len(self.support), size=count, p=self.probs / self.probs.sum())


@dataclass(frozen=True, eq=False)
class BoxedGaussianPolicy:
    """Diagonal Gaussian over a box; draws are clipped to the box."""

    mean: np.ndarray
    log_std: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        p = mean.size
        log_std = np.broadcast_to(np.asarray(self.log_std, dtype=float), (p,)).copy()
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (p,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (p,)).copy()
        if np.any(lower >= upper):
            raise InvalidArgumentError("policy box needs lower < upper per coordinate")
        if np.any(mean < lower) or np.any(mean > upper):
            raise InvalidArgumentError("policy mean lies outside the box")
        if not np.all(np.isfinite(log_std)) or np.any(np.exp(log_std) > upper - lower):
            raise InvalidArgumentError("policy std must be positive and at most the box width")
        for arr in (mean, log_std, lower, upper):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_std", log_std)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def centered(cls, lower, upper, std_fraction: float = 0.5) -> "BoxedGaussianPolicy":
        """Policy centred in the box with std ``std_fraction`` times the half-width."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        return cls(0.5 * (lower + upper), np.log(std_fraction * 0.5 * (upper - lower)),
                   lower, upper)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    def sample_raw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal((count, self.dim))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.clip(self.sample_raw(rng, count), self.lower, self.upper)


@dataclass(frozen=True)
class PacConfig:
    lam: float
    delta: float = 0.05
    constants: RegularityConstants = field(default_factory=RegularityConstants)

    def __post_init__(self):
        if not self.lam > 0.0 or math.isinf(self.lam):
            raise InvalidArgumentError(f"lambda must be positive and finite, got {self.lam!r}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidArgumentError(f"delta must lie in (0, 1), got {self.delta!r}")


def _check_estimates(policy: DiscretePolicy, estimates) -> np.ndarray:
    est = np.asarray(estimates, dtype=float).ravel()
    if est.size != len(policy.support):
        raise InvalidArgumentError(
            f"{est.size} estimates for a support of {len(policy.support)} designs")
    if not np.all(np.isfinite(est)):
        raise InvalidArgumentError("estimates must be finite")
    return est


def gibbs_update(prior: DiscretePolicy, estimates, lam: float) -> DiscretePolicy:
    """Gibbs policy ``log pi = log pi0 + lam * estimates - log Z``."""
    est = _check_estimates(prior, estimates)
    if not lam >= 0.0:
        raise InvalidArgumentError(f"lambda must be nonnegative, got {lam!r}")
    if lam == 0.0:
        return prior
    return DiscretePolicy.from_weights(prior.support, prior.log_probs + lam * est)


def _kl_discrete(a: DiscretePolicy, b: DiscretePolicy) -> float:
    if [_design_key(d) for d in a.support] != [_design_key(d) for d in b.support]:
        raise InvalidArgumentError("policies are defined on different supports")
    pa = a.probs
    mask = pa > 0.0
    if np.any(np.isneginf(b.log_probs[mask])):
        raise InfiniteKLError("reference policy puts zero mass where the policy has mass")
    return max(float(np.sum(pa[mask] * (a.log_probs[mask] - b.log_probs[mask]))), 0.0)


def _kl_gaussian_diag(a: BoxedGaussianPolicy, b: BoxedGaussianPolicy) -> float:
    if a.dim != b.dim or not (np.array_equal(a.lower, b.lower) and np.array_equal(a.upper, b.upper)):
        raise InvalidArgumentError("policies are defined on different boxes")
    var_ratio = np.exp(2.0 * (a.log_std - b.log_std))
    maha = ((a.mean - b.mean) / b.std) ** 2
    return max(float(0.5 * np.sum(var_ratio + maha - 1.0) - np.sum(a.log_std - b.log_std)), 0.0)


def kl_policies(a, b) -> float:
    """KL(a || b) for two discrete or two boxed-Gaussian policies.

    The Gaussian case is the KL of the unclipped diagonal Gaussians.
    """
    if isinstance(a, DiscretePolicy) and isinstance(b, DiscretePolicy):
        return _kl_discrete(a, b)
    if isinstance(a, BoxedGaussianPolicy) and isinstance(b, BoxedGaussianPolicy):
        return _kl_gaussian_diag(a, b)
    raise InvalidArgumentError("policies must be of the same kind")


def pac_objective(policy: DiscretePolicy, estimates, prior: DiscretePolicy, lam: float) -> float:
    """``E_pi[estimates] - KL(pi || prior) / lam``."""
    est = _check_estimates(policy, estimates)
    if not lam > 0.0:
        raise InvalidArgumentError(f"lambda must be positive, got {lam!r}")
    return policy.expectation(est) - kl_policies(policy, prior) / lam


def pac_lower_bound(empirical_mean: float, kl: float, config: PacConfig, outer_n: int) -> float:
    """High-probability lower bound on the policy value.

    ``mean - lam L_f^2 C_h^2 / (2N) - (KL + log(1/delta)) / lam``.
    """
    if outer_n < 1:
        raise InvalidArgumentError("outer_n must be >= 1")
    if not kl >= 0.0:
        raise InvalidArgumentError(f"kl must be nonnegative, got {kl!r}")
    c = config.constants
    lam = config.lam
    return (empirical_mean - lam * c.L_f**2 * c.C_h**2 / (2.0 * outer_n)
            - (kl + math.log(1.0 / config.delta)) / lam)


Objective = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def mirror_descent(objective: Objective, prior: BoxedGaussianPolicy, config: PacConfig,
                   steps: int = 200, batch: int = 32, seed: int | Sequence[int] = 0,
                   lr_mean: float = 0.05, lr_log_std: float = 0.05,
                   init: BoxedGaussianPolicy | None = None,
                   callback: Callable[[int, BoxedGaussianPolicy], None] | None = None,
                   ) -> BoxedGaussianPolicy:
    """KL-regularised stochastic ascent on a boxed-Gaussian policy.

    Each step draws ``batch`` designs from the current policy, clipped to the
    box, queries ``objective(designs, rng)`` once for all of them (a noisy
    value per design), and moves ``(mean, log_std)`` along a score-function
    estimate of the natural gradient of ``lam * E_pi[objective] - KL(pi || prior)``
    (the regularised objective measured in units of KL, same maximiser) with
    the batch mean as baseline. The mean is projected back into the box and
    the std is capped at the box width after every step.

    ``objective`` receives a ``(batch, dim)`` array and the step's generator,
    which is derived from ``(*seed, step)``.
    """
    if steps < 1:
        raise InvalidArgumentError("steps must be >= 1")
    if batch < 2:
        raise InvalidArgumentError("batch must be >= 2")
    policy = prior if init is None else init
    lower, upper = prior.lower, prior.upper
    max_log_std = np.log(upper - lower)
    mu, s = policy.mean.copy(), policy.log_std.copy()
    mu0, var0 = prior.mean, prior.std**2
    for step in range(steps):
        rng = derive_rng(*_keys(seed), step)
        std = np.exp(s)
        z = rng.standard_normal((batch, mu.size))
        designs = np.clip(mu + std * z, lower, upper)
        try:
            values = np.asarray(objective(designs, rng), dtype=float).reshape(batch)
        except Exception as exc:
            raise EstimationFailedError(f"objective failed at step {step}: {exc}") from exc
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise EstimationFailedError(
                f"objective returned {values[bad]!r} at step {step}, design {designs[bad].tolist()}")
        adv = values - values.mean()
        # gradient of lam * E_pi[objective] - KL(pi || prior), preconditioned by
        # the inverse Fisher information of (mean, log_std): diag(std^2) and 1/2
        grad_mu = config.lam * (adv @ z) / batch * std - (mu - mu0) * std**2 / var0
        grad_s = 0.5 * (config.lam * (adv @ (z**2 - 1.0)) / batch - (np.exp(2.0 * s) / var0 - 1.0))
        mu = np.clip(mu + lr_mean * grad_mu, lower, upper)
        s = np.minimum(s + lr_log_std * grad_s, max_log_std)
        if callback is not None:
            callback(step, BoxedGaussianPolicy(mu, s, lower, upper))
    return BoxedGaussianPolicy(mu, s, lower, upper)


def entropic_mirror_descent(estimator: Callable[[np.random.Generator], np.ndarray],
                            prior: DiscretePolicy, lam: float, rounds: int = 8,
                            seed: int | Sequence[int] = 0) -> DiscretePolicy:
    """Stochastic exponentiated-gradient ascent on ``E_pi[I] - KL(pi || prior) / lam``.

    Each round queries ``estimator(rng)`` for a fresh noisy value of every
    design in the support and takes the entropic mirror step
    ``log pi <- (1 - 1/t) log pi + (1/t) (log prior + lam * estimate_t)``.
    With this ``1/t`` schedule the iterate after ``T`` rounds is exactly the
    Gibbs policy on the running mean of the ``T`` estimates.
    """
    if rounds < 1:
        raise InvalidArgumentError("rounds must be >= 1")
    keys = _keys(seed)
    log_pi = prior.log_probs.copy()
    for t in range(1, rounds + 1):
        est = _check_estimates(prior, estimator(derive_rng(*keys, t - 1)))
        target = prior.log_probs + lam * est
        log_pi = (1.0 - 1.0 / t) * log_pi + target / t if t > 1 else target
        log_pi = log_pi - logsumexp(log_pi)
    return DiscretePolicy(prior.support, log_pi)
