"""Beta-Binomial A/B test: two groups, independent Beta priors, ``N_x`` subjects split ``n_a + n_b``.

Every quantity is evaluated exactly by enumerating the outcome grid
``{0..n_a} x {0..n_b}``; per-group sums suffice wherever the two groups
decouple.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, digamma, gammaln, logsumexp

from .core import as_alpha
from .errors import CapacityError, InvalidArgumentError
from .renyi import BetaDist, kl_beta, near_one, renyi_beta

__all__ = [
    "ABModel",
    "Allocation",
    "ENUMERATION_CAP",
    "marginal_log_pmf",
    "posterior",
    "tilted_posterior",
    "log_Z_alpha",
    "tilted_marginal_pmf",
    "nominal_marginal_pmf",
    "sibson_mi",
    "group_sibson_mi",
    "sibson_curve",
    "best_allocation",
    "sample_worst_case",
    "sample_nominal",
    "conditional_gain",
    "log_predictive_pmf",
    "ABGenerative",
]

# Largest total budget for which the outcome grid is enumerated.
ENUMERATION_CAP = 200


@dataclass(frozen=True)
class ABModel:
    prior_a: BetaDist
    prior_b: BetaDist
    total_budget: int

    def __post_init__(self):
        if int(self.total_budget) != self.total_budget or self.total_budget < 1:
            raise InvalidArgumentError("total budget must be a positive integer")
        object.__setattr__(self, "total_budget", int(self.total_budget))

    @classmethod
    def uniform(cls, total_budget: int) -> "ABModel":
        return cls(BetaDist(1.0, 1.0), BetaDist(1.0, 1.0), total_budget)

    @property
    def priors(self) -> tuple[BetaDist, BetaDist]:
        return self.prior_a, self.prior_b

    def allocation(self, n_a: int) -> "Allocation":
        return Allocation(int(n_a), self.total_budget - int(n_a))

    def allocations(self) -> list["Allocation"]:
        return [self.allocation(n) for n in range(self.total_budget + 1)]


@dataclass(frozen=True)
class Allocation:
    n_a: int
    n_b: int

    def __post_init__(self):
        if self.n_a < 0 or self.n_b < 0:
            raise InvalidArgumentError(f"group sizes must be nonnegative, got {self}")

    @property
    def sizes(self) -> tuple[int, int]:
        return self.n_a, self.n_b

    @property
    def total(self) -> int:
        return self.n_a + self.n_b


def _check_alloc(model: ABModel, alloc: Allocation) -> None:
    if alloc.total != model.total_budget:
        raise InvalidArgumentError(
            f"allocation {alloc.sizes} does not spend the budget {model.total_budget}"
        )


def _check_outcome(alloc: Allocation, outcome) -> tuple[int, int]:
    x_a, x_b = (int(v) for v in outcome)
    if not (0 <= x_a <= alloc.n_a and 0 <= x_b <= alloc.n_b):
        raise InvalidArgumentError(f"outcome {(x_a, x_b)} out of range for {alloc.sizes}")
    return x_a, x_b


def _log_choose(n, x):
    return gammaln(n + 1.0) - gammaln(x + 1.0) - gammaln(n - x + 1.0)


def _group_log_pmf(prior: BetaDist, n, x):
    """Beta-Binomial log pmf, vectorised over ``x``."""
    x = np.asarray(x, dtype=float)
    return (_log_choose(n, x) + betaln(prior.delta + x, prior.gamma + n - x)
            - betaln(prior.delta, prior.gamma))


def marginal_log_pmf(model: ABModel, alloc: Allocation, outcome) -> float:
    _check_alloc(model, alloc)
    x_a, x_b = _check_outcome(alloc, outcome)
    return float(_group_log_pmf(model.prior_a, alloc.n_a, x_a)
                 + _group_log_pmf(model.prior_b, alloc.n_b, x_b))


def nominal_marginal_pmf(model: ABModel, alloc: Allocation) -> np.ndarray:
    """Beta-Binomial pmf on the full grid, indexed ``[x_a, x_b]``."""
    _check_alloc(model, alloc)
    la = _group_log_pmf(model.prior_a, alloc.n_a, np.arange(alloc.n_a + 1))
    lb = _group_log_pmf(model.prior_b, alloc.n_b, np.arange(alloc.n_b + 1))
    return np.exp(la[:, None] + lb[None, :])


def _update(prior: BetaDist, n: int, x: int, weight: float) -> BetaDist:
    return BetaDist(prior.delta + weight * x, prior.gamma + weight * (n - x))


def posterior(model: ABModel, alloc: Allocation, outcome) -> tuple[BetaDist, BetaDist]:
    _check_alloc(model, alloc)
    x_a, x_b = _check_outcome(alloc, outcome)
    return (_update(model.prior_a, alloc.n_a, x_a, 1.0),
            _update(model.prior_b, alloc.n_b, x_b, 1.0))


def tilted_posterior(model: ABModel, alloc: Allocation, outcome, order) -> tuple[BetaDist, BetaDist]:
    a = as_alpha(order)
    _check_alloc(model, alloc)
    x_a, x_b = _check_outcome(alloc, outcome)
    return (_update(model.prior_a, alloc.n_a, x_a, a),
            _update(model.prior_b, alloc.n_b, x_b, a))


def log_Z_alpha(prior: BetaDist, n: int, x, order):
    """``log E_prior[Bin(x; n, theta) ** alpha]`` for one group, vectorised over ``x``."""
    a = as_alpha(order)
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0) or np.any(xs > n) or n < 0:
        raise InvalidArgumentError(f"counts must satisfy 0 <= x <= n (n={n})")
    value = (a * _log_choose(n, xs) + betaln(prior.delta + a * xs, prior.gamma + a * (n - xs))
             - betaln(prior.delta, prior.gamma))
    return float(value) if np.ndim(value) == 0 else value


def _group_log_tilted(prior: BetaDist, n: int, a: float) -> np.ndarray:
    """Unnormalised log tilted pmf ``log_Z / alpha`` over ``x = 0..n``."""
    return log_Z_alpha(prior, n, np.arange(n + 1), a) / a


def tilted_marginal_pmf(model: ABModel, alloc: Allocation, order) -> np.ndarray:
    """Tilted outcome pmf on the grid, indexed ``[x_a, x_b]``; sums to one."""
    a = as_alpha(order)
    _check_alloc(model, alloc)
    la = _group_log_tilted(model.prior_a, alloc.n_a, a)
    lb = _group_log_tilted(model.prior_b, alloc.n_b, a)
    la = la - logsumexp(la)
    lb = lb - logsumexp(lb)
    return np.exp(la[:, None] + lb[None, :])


def _group_shannon(prior: BetaDist, n: int) -> float:
    # alpha -> 1 limit of the Sibson form: sum_x p(x) (E_post[log lik] - log p(x))
    if n == 0:
        return 0.0
    x = np.arange(n + 1, dtype=float)
    log_p = _group_log_pmf(prior, n, x)
    d, g = prior.delta + x, prior.gamma + n - x
    e_log_theta = digamma(d) - digamma(d + g)
    e_log_1m = digamma(g) - digamma(d + g)
    e_loglik = _log_choose(n, x) + x * e_log_theta + (n - x) * e_log_1m
    return max(float(np.sum(np.exp(log_p) * (e_loglik - log_p))), 0.0)


def _group_sibson(prior: BetaDist, n: int, a: float) -> float:
    if n == 0:
        return 0.0
    return near_one(a, lambda b: _group_sibson_direct(prior, n, b), lambda: _group_shannon(prior, n))


def _group_sibson_direct(prior: BetaDist, n: int, a: float) -> float:
    value = a / (a - 1.0) * logsumexp(_group_log_tilted(prior, n, a))
    return max(float(value), 0.0)


def group_sibson_mi(prior: BetaDist, n: int, order) -> float:
    """Sibson's alpha-MI contributed by one group of ``n`` subjects (``n = 0`` gives 0)."""
    if int(n) != n or n < 0:
        raise InvalidArgumentError(f"group size must be a nonnegative integer, got {n!r}")
    return _group_sibson(prior, int(n), as_alpha(order))


def sibson_mi(model: ABModel, alloc: Allocation, order) -> float:
    """Sibson's alpha-MI, additive over the two groups."""
    a = as_alpha(order)
    _check_alloc(model, alloc)
    return (_group_sibson(model.prior_a, alloc.n_a, a)
            + _group_sibson(model.prior_b, alloc.n_b, a))


def sibson_curve(model: ABModel, order) -> np.ndarray:
    """Sibson's alpha-MI for every allocation ``n_a = 0..N_x``."""
    a = as_alpha(order)
    N = model.total_budget
    ga = np.array([_group_sibson(model.prior_a, n, a) for n in range(N + 1)])
    gb = np.array([_group_sibson(model.prior_b, n, a) for n in range(N + 1)])
    return ga + gb[::-1]


def best_allocation(model: ABModel, order) -> Allocation:
    """Allocation maximising Sibson's alpha-MI; ties go to the smallest ``n_a``."""
    curve = sibson_curve(model, order)
    return model.allocation(int(np.argmax(curve)))


def _grid_index(alloc: Allocation, flat: np.ndarray) -> np.ndarray:
    return np.stack(np.unravel_index(flat, (alloc.n_a + 1, alloc.n_b + 1)), axis=-1)


def _sample_grid(pmf: np.ndarray, alloc: Allocation, count: int, rng) -> np.ndarray:
    cdf = np.cumsum(pmf.ravel())
    u = rng.random(count) * cdf[-1]
    flat = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    return _grid_index(alloc, flat)


def sample_worst_case(model: ABModel, alloc: Allocation, order, count: int,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Exact draws from the worst-case joint.

    ``x`` comes from the tilted marginal by inverse CDF on the enumerated
    grid, then each ``theta_k`` from its tilted Beta posterior. Returns
    ``theta`` of shape ``(count, 2)`` and integer ``x`` of shape ``(count, 2)``.
    """
    a = as_alpha(order)
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    _check_alloc(model, alloc)
    if alloc.total > ENUMERATION_CAP:
        raise CapacityError(f"outcome grid for N_x={alloc.total} exceeds {ENUMERATION_CAP}")
    x = _sample_grid(tilted_marginal_pmf(model, alloc, a), alloc, count, rng)
    theta = np.empty((count, 2))
    for k, (prior, n) in enumerate(zip(model.priors, alloc.sizes)):
        theta[:, k] = rng.beta(prior.delta + a * x[:, k], prior.gamma + a * (n - x[:, k]))
    return theta, x


def sample_nominal(model: ABModel, alloc: Allocation, count: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    _check_alloc(model, alloc)
    theta = np.stack([rng.beta(p.delta, p.gamma, size=count) for p in model.priors], axis=-1)
    x = np.stack([rng.binomial(n, theta[:, k]) for k, n in enumerate(alloc.sizes)], axis=-1)
    return theta, x


def conditional_gain(model: ABModel, alloc: Allocation, outcome, order) -> float:
    """Sum over groups of D_alpha[posterior_k || prior_k]; KL at ``alpha = 1``."""
    a = as_alpha(order)
    post = posterior(model, alloc, outcome)
    div = kl_beta if a == 1.0 else (lambda q, p: renyi_beta(q, p, a))
    return sum(div(q, p) for q, p in zip(post, model.priors))


def log_predictive_pmf(model: ABModel, posterior_pair, test_alloc: Allocation, test_outcome) -> float:
    """Beta-Binomial log pmf of a held-out outcome under the given (posterior) Beta pair."""
    x_a, x_b = _check_outcome(test_alloc, test_outcome)
    q_a, q_b = posterior_pair
    return float(_group_log_pmf(q_a, test_alloc.n_a, x_a) + _group_log_pmf(q_b, test_alloc.n_b, x_b))


class ABGenerative:
    """Sampling/likelihood capability of the A/B model for the nested estimator.

    A design is the integer ``n_a`` (scalar, or an array whose axes broadcast
    against the sample axes of ``theta``); ``n_b = N_x - n_a``. Outcomes and
    parameters carry a trailing axis of length 2.
    """

    design_ndim = 0

    def __init__(self, model: ABModel):
        self.model = model

    def prepare(self, design) -> np.ndarray:
        if isinstance(design, Allocation):
            _check_alloc(self.model, design)
            design = design.n_a
        n_a = np.asarray(design)
        if np.any(n_a < 0) or np.any(n_a > self.model.total_budget) or np.any(n_a != np.round(n_a)):
            raise InvalidArgumentError(f"allocation outside 0..{self.model.total_budget}")
        return n_a.astype(int)

    def _sizes(self, design) -> np.ndarray:
        n_a = np.asarray(design)
        return np.stack([n_a, self.model.total_budget - n_a], axis=-1)

    def sample_prior(self, rng: np.random.Generator, shape) -> np.ndarray:
        shape = tuple(np.atleast_1d(shape))
        # interleaved (a, b) per sample keeps the stream prefix-stable in the sample count
        d = np.array([p.delta for p in self.model.priors])
        g = np.array([p.gamma for p in self.model.priors])
        return rng.beta(d, g, size=shape + (2,))

    def sample_outcome(self, rng: np.random.Generator, theta: np.ndarray, design) -> np.ndarray:
        n = np.broadcast_to(self._sizes(design), theta.shape)
        return rng.binomial(n, theta)

    def log_likelihood(self, x: np.ndarray, theta: np.ndarray, design) -> np.ndarray:
        n = self._sizes(design)
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = (_log_choose(n, x) + np.where(x > 0, x * np.log(theta), 0.0)
                    + np.where(n - x > 0, (n - x) * np.log1p(-theta), 0.0))
        return np.sum(term, axis=-1)

    def log_marginal(self, x: np.ndarray, design) -> np.ndarray:
        n = self._sizes(design)
        x = np.asarray(x, dtype=float)
        out = 0.0
        for k, prior in enumerate(self.model.priors):
            out = out + _group_log_pmf(prior, n[..., k], x[..., k])
        return out
