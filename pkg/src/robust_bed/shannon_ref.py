"""Shannon expected information gain for the two conjugate models.

These are the ``alpha = 1`` reference values and the nominal-design
baselines. The A/B test value is available in two representations that are
computed along unrelated routes: the expected posterior-to-prior KL over the
outcome grid, and the expected likelihood-to-marginal KL integrated over the
parameter by quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import betaln, gammaln

from .abtest import ENUMERATION_CAP, ABModel, Allocation, _check_alloc, nominal_marginal_pmf
from .errors import CapacityError, InvalidArgumentError
from .linreg import LinRegModel, design_matrix
from .renyi import BetaDist, kl_beta

__all__ = ["EigValue", "REPRESENTATIONS", "shannon_eig_linreg", "shannon_eig_abtest"]

REPRESENTATIONS = ("param-div", "entropy-diff", "lklhd-div")


@dataclass(frozen=True)
class EigValue:
    value: float
    representation: str

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise InvalidArgumentError(f"unknown representation {self.representation!r}")
        if not self.value >= 0.0:
            raise InvalidArgumentError(f"information gain must be nonnegative, got {self.value!r}")

    def __float__(self) -> float:
        return float(self.value)


def shannon_eig_linreg(model: LinRegModel, designs) -> EigValue:
    """Prior entropy minus posterior entropy, ``0.5 logdet(I + H S0 H^T / sigma^2)``."""
    H = design_matrix(model, designs)
    gram = (H @ model.prior_cov @ H.T) / model.noise_var
    _, logdet = np.linalg.slogdet(np.eye(H.shape[0]) + gram)
    return EigValue(max(0.5 * float(logdet), 0.0), "entropy-diff")


def _param_div(model: ABModel, alloc: Allocation) -> float:
    pmf = nominal_marginal_pmf(model, alloc)
    total = 0.0
    # the double sum factorises: E_x[KL_a + KL_b] = E_{x_a}[KL_a] + E_{x_b}[KL_b]
    for axis, (prior, n) in enumerate(zip(model.priors, alloc.sizes)):
        marg = pmf.sum(axis=1 - axis)
        for x in range(n + 1):
            post = BetaDist(prior.delta + x, prior.gamma + n - x)
            total += marg[x] * kl_beta(post, prior)
    return total


def _group_lklhd_div(prior: BetaDist, n: int) -> float:
    if n == 0:
        return 0.0
    x = np.arange(n + 1, dtype=float)
    log_choose = gammaln(n + 1.0) - gammaln(x + 1.0) - gammaln(n - x + 1.0)
    log_marg = (log_choose + betaln(prior.delta + x, prior.gamma + n - x)
                - betaln(prior.delta, prior.gamma))
    log_norm = betaln(prior.delta, prior.gamma)

    def integrand(t):
        log_lik = log_choose + x * np.log(t) + (n - x) * np.log1p(-t)
        lik = np.exp(log_lik)
        kl = float(np.sum(lik * (log_lik - log_marg)))
        log_prior = (prior.delta - 1.0) * np.log(t) + (prior.gamma - 1.0) * np.log1p(-t) - log_norm
        return np.exp(log_prior) * kl

    value, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=200)
    return value


def shannon_eig_abtest(model: ABModel, alloc: Allocation,
                       representation: str = "param-div") -> EigValue:
    """Exact Shannon EIG of an allocation.

    ``"param-div"`` enumerates ``sum_x p(x) KL(posterior || prior)``;
    ``"lklhd-div"`` integrates ``KL(p(x | theta) || p(x))`` against the prior
    by adaptive quadrature.
    """
    _check_alloc(model, alloc)
    if alloc.total > ENUMERATION_CAP:
        raise CapacityError(f"outcome grid for N_x={alloc.total} exceeds {ENUMERATION_CAP}")
    if representation == "param-div":
        value = _param_div(model, alloc)
    elif representation == "lklhd-div":
        value = sum(_group_lklhd_div(p, n) for p, n in zip(model.priors, alloc.sizes))
    else:
        raise InvalidArgumentError(
            f"abtest supports 'param-div' or 'lklhd-div', got {representation!r}")
    return EigValue(max(float(value), 0.0), representation)
