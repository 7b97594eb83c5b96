"""Nested Monte Carlo estimation of Sibson's alpha-mutual information.

All arithmetic runs in the log domain. For a design ``xi``:

1. draw ``N`` joint pairs ``(theta_i, x_i)`` and ``N x M`` auxiliary prior
   draws ``theta_ij``;
2. contrastive log-weights
   ``log w_ij = l(theta_ij, x_i) - LSE_k l(theta_ik, x_i) + log M``;
3. inner term ``log ell_i = LSE_j(alpha * log w_ij) - log M``;
4. output ``alpha / (alpha - 1) * (LSE_i(log ell_i / alpha) - log N)``.

The generating ``theta_i`` never enters the contrastive set.

Random streams are split by role (outer parameters, outcomes, auxiliary
draws), each filled in row-major order, so increasing ``N`` leaves the
draws of earlier outer indices untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .core import Order, RegularityConstants, derive_rng
from .errors import EstimationFailedError, InvalidArgumentError

__all__ = [
    "GenerativeModel",
    "NmcConfig",
    "estimate",
    "estimate_batch",
    "estimate_per_design",
    "estimate_from_loglik",
    "min_inner_samples",
    "bias_curve",
]

# stream keys, one per role
_OUTER, _OUTCOME, _INNER, _CONTRAST = 0, 1, 2, 3


class GenerativeModel(Protocol):
    """Capabilities the estimator needs.

    ``theta`` arrays carry the parameter on the last axis; outcomes carry
    ``model``-specific trailing axes. A design of ``design_ndim`` trailing
    axes broadcasts against the leading sample axes of ``theta``.
    """

    design_ndim: int

    def prepare(self, design) -> np.ndarray: ...

    def sample_prior(self, rng: np.random.Generator, shape) -> np.ndarray: ...

    def sample_outcome(self, rng: np.random.Generator, theta: np.ndarray, design) -> np.ndarray: ...

    def log_likelihood(self, x: np.ndarray, theta: np.ndarray, design) -> np.ndarray: ...


@dataclass(frozen=True)
class NmcConfig:
    outer_n: int
    inner_m: int
    order: Order
    contrastive_k: int | None = None
    exact_ratio: bool = False

    def __post_init__(self):
        if not isinstance(self.order, Order):
            object.__setattr__(self, "order", Order(self.order))
        if self.order.alpha == 1.0:
            raise InvalidArgumentError("the nested estimator needs alpha in (0, 1)")
        for name in ("outer_n", "inner_m"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.contrastive_k is not None and int(self.contrastive_k) < 1:
            raise InvalidArgumentError("contrastive_k must be >= 1")

    @property
    def alpha(self) -> float:
        return self.order.alpha

    @property
    def k(self) -> int:
        return self.inner_m if self.contrastive_k is None else int(self.contrastive_k)


def _lse(a: np.ndarray, axis: int = -1, keepdims: bool = False) -> np.ndarray:
    # max-shifted log-sum-exp; rows that are entirely -inf stay -inf
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def _log_inner(loglik, alpha, contrast=None, log_marginal=None):
    m = loglik.shape[-1]
    if log_marginal is not None:
        log_w = loglik - np.asarray(log_marginal)[..., None]
    else:
        ref = loglik if contrast is None else contrast
        log_w = loglik - _lse(ref, keepdims=True) + math.log(ref.shape[-1])
    return _lse(alpha * log_w) - math.log(m)


def _log_outer(log_ell, alpha):
    n = log_ell.shape[-1]
    return alpha / (alpha - 1.0) * (_lse(log_ell / alpha) - math.log(n))


def estimate_from_loglik(loglik: np.ndarray, alpha: float,
                         contrast: np.ndarray | None = None,
                         log_marginal: np.ndarray | None = None) -> np.ndarray:
    """Steps 2-4 on cached log-likelihoods.

    ``loglik[..., i, j] = l(theta_ij, x_i)``. Contrastive normalisation uses
    ``contrast`` (same layout, K columns) if given, otherwise ``loglik``
    itself; ``log_marginal[..., i]`` replaces it with the exact
    ``log p(x_i)``. Leading axes index independent designs.
    """
    loglik = np.asarray(loglik, dtype=float)
    if contrast is not None:
        contrast = np.asarray(contrast, dtype=float)
    return _log_outer(_log_inner(loglik, alpha, contrast, log_marginal), alpha)


def _check_finite(ll: np.ndarray, what: str, offset=()) -> None:
    bad = ~np.isfinite(ll)
    if bad.any():
        idx = tuple(int(v) for v in np.argwhere(bad)[0])
        where = tuple(o + i for o, i in zip(offset, idx)) + idx[len(offset):]
        raise EstimationFailedError(
            f"non-finite log-likelihood {ll[idx]!r} at {what} index {where}")


# sample-count budget per vectorised block (outer x inner draws)
_BLOCK = 1 << 21


def _draw_block(model, streams, design, n, m, k, config):
    """Log inner terms for ``n`` outer samples at a block of designs (leading axis)."""
    nd = model.design_ndim
    lead = design.shape[: design.ndim - nd]
    ev = design.shape[design.ndim - nd:]
    d_outer = design.reshape(lead + (1,) + ev)
    d_inner = design.reshape(lead + (1, 1) + ev)
    theta = model.sample_prior(streams[_OUTER], lead + (n,))
    x = model.sample_outcome(streams[_OUTCOME], theta, d_outer)
    x_inner = np.expand_dims(x, axis=len(lead) + 1)
    aux = model.sample_prior(streams[_INNER], lead + (n, m))
    ll = model.log_likelihood(x_inner, aux, d_inner)
    contrast = log_marg = None
    if config.exact_ratio:
        if not hasattr(model, "log_marginal"):
            raise InvalidArgumentError("exact-ratio mode needs a model with log_marginal")
        log_marg = model.log_marginal(x, d_outer)
    elif k != m:
        extra = model.sample_prior(streams[_CONTRAST], lead + (n, k))
        contrast = model.log_likelihood(x_inner, extra, d_inner)
    return ll, contrast, log_marg


def estimate_batch(model: GenerativeModel, designs, config: NmcConfig,
                   rng: np.random.Generator | int) -> np.ndarray:
    """Estimates for a stack of designs from one seed, vectorised across designs.

    ``designs`` has one leading axis over designs; each design gets its own
    fresh samples. Draws are consumed from every stream in row-major
    ``(design, outer, inner)`` order whether or not the work is split into
    blocks, so the result does not depend on the block size.
    """
    if not isinstance(rng, np.random.Generator):
        rng = derive_rng(int(rng))
    designs = model.prepare(designs)
    if designs.ndim != model.design_ndim + 1:
        raise InvalidArgumentError("designs need exactly one leading batch axis")
    D = designs.shape[0]
    N, M, K = config.outer_n, config.inner_m, config.k
    alpha = config.alpha
    streams = rng.spawn(4)
    width = max(M, K if K != M and not config.exact_ratio else M)

    if D * N * width <= _BLOCK:
        ll, contrast, log_marg = _draw_block(model, streams, designs, N, M, K, config)
        _check_finite(ll, "(design, outer, inner)")
        if contrast is not None:
            _check_finite(contrast, "(design, outer, contrastive)")
        return _log_outer(_log_inner(ll, alpha, contrast, log_marg), alpha)

    step = max(1, _BLOCK // width)
    out = np.empty(D)
    for di in range(D):
        log_ell = np.empty(N)
        for start in range(0, N, step):
            n = min(step, N - start)
            ll, contrast, log_marg = _draw_block(model, streams, designs[di:di + 1], n, M, K, config)
            _check_finite(ll, "(design, outer, inner)", (di, start))
            if contrast is not None:
                _check_finite(contrast, "(design, outer, contrastive)", (di, start))
            log_ell[start:start + n] = _log_inner(ll, alpha, contrast, log_marg)[0]
        out[di] = _log_outer(log_ell, alpha)
    return out


def estimate(model: GenerativeModel, design, config: NmcConfig, seed) -> float:
    """Nested Monte Carlo estimate of Sibson's alpha-MI at one design; deterministic in ``seed``."""
    d = model.prepare(design)
    return float(estimate_batch(model, d[None], config, seed)[0])


def estimate_per_design(model: GenerativeModel, designs: Sequence, config: NmcConfig,
                        seed: int) -> list[float]:
    """One independent estimate per design; design ``i`` uses the stream derived from ``(seed, i)``."""
    if len(designs) == 0:
        raise InvalidArgumentError("design list is empty")
    return [estimate(model, d, config, derive_rng(seed, i)) for i, d in enumerate(designs)]


def min_inner_samples(outer_n: int, delta: float, constants: RegularityConstants) -> int:
    """Smallest inner budget ``M`` for which the PAC-Bayes lower bound applies.

    ``M >= 2 N L_h^2 sigma_w^2 / (C_h^2 log(2 / delta))``, at least 1.
    """
    if not 0.0 < delta < 1.0:
        raise InvalidArgumentError("delta must lie in (0, 1)")
    if constants.C_h <= 0.0:
        raise InvalidArgumentError("C_h must be positive")
    if outer_n < 1:
        raise InvalidArgumentError("outer_n must be >= 1")
    bound = (2.0 * outer_n * constants.L_h**2 * constants.sigma_w**2
             / (constants.C_h**2 * math.log(2.0 / delta)))
    return max(1, math.ceil(bound))


def bias_curve(model: GenerativeModel, design, order, outer_n: int, inner_grid: Sequence[int],
               reps: int, seed: int, reference: float) -> list[dict]:
    """Mean and spread of ``estimate - reference`` over ``reps`` repetitions, per inner budget.

    ``std_error`` is ``None`` when ``reps == 1``.
    """
    if reps < 1:
        raise InvalidArgumentError("reps must be >= 1")
    order = order if isinstance(order, Order) else Order(order)
    d = model.prepare(design)
    rows = []
    for gi, m in enumerate(inner_grid):
        config = NmcConfig(outer_n, int(m), order)
        stack = np.broadcast_to(d, (reps,) + d.shape)
        errors = estimate_batch(model, stack, config, derive_rng(seed, gi)) - reference
        rows.append({
            "M": int(m),
            "mean_error": float(np.mean(errors)),
            "std_error": float(np.std(errors, ddof=1)) if reps > 1 else None,
        })
    return rows
