"""Conjugate Gaussian linear regression under alpha-tilting.

A batch of ``N_b`` designs is stacked into a design matrix ``H`` whose rows
are produced by the model's feature map: ``"affine"`` appends a constant 1 to
each design vector (the slope/offset model), ``"identity"`` uses the design
vector as is (``x = design @ theta + noise``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import Order, as_alpha
from .errors import EstimationFailedError, InvalidArgumentError
from .renyi import GaussianDist, kl_gaussian, renyi_gaussian

__all__ = [
    "LinRegModel",
    "design_matrix",
    "posterior",
    "tilted_posterior",
    "tilted_marginal",
    "nominal_marginal",
    "sibson_mi",
    "worst_case_joint",
    "sample_worst_case",
    "sample_nominal",
    "conditional_gain",
    "log_predictive_density",
    "LinRegGenerative",
]

FEATURE_MAPS = ("affine", "identity")


@dataclass(frozen=True, eq=False)
class LinRegModel:
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    noise_var: float = 1.0
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    feature: str = "affine"
    prior: GaussianDist = field(init=False, repr=False)

    def __post_init__(self):
        if self.feature not in FEATURE_MAPS:
            raise InvalidArgumentError(f"feature map must be one of {FEATURE_MAPS}")
        if not self.noise_var > 0.0:
            raise InvalidArgumentError("noise variance must be positive")
        prior = GaussianDist(self.prior_mean, self.prior_cov)
        p = prior.dim - 1 if self.feature == "affine" else prior.dim
        if p < 1:
            raise InvalidArgumentError("affine feature map needs a parameter of dimension >= 2")
        lower = np.full(p, -1.0) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (p,)).copy()
        upper = np.full(p, 1.0) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (p,)).copy()
        if np.any(lower >= upper):
            raise InvalidArgumentError("design box needs lower < upper per coordinate")
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "prior_mean", prior.mean)
        object.__setattr__(self, "prior_cov", prior.cov)
        object.__setattr__(self, "noise_var", float(self.noise_var))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def default(cls, dim: int = 2, feature: str = "affine", noise_var: float = 1.0,
                prior_var: float = 1.0) -> "LinRegModel":
        """Zero-mean isotropic prior, unit noise and a [-1, 1] box."""
        return cls(np.zeros(dim), prior_var * np.eye(dim), noise_var, feature=feature)

    @property
    def dim(self) -> int:
        return self.prior.dim

    @property
    def design_dim(self) -> int:
        return self.lower.size

    def features(self, designs) -> np.ndarray:
        """Feature rows for designs of shape ``(..., design_dim)``; no box check."""
        designs = np.asarray(designs, dtype=float)
        if self.feature == "affine":
            ones = np.ones(designs.shape[:-1] + (1,))
            return np.concatenate([designs, ones], axis=-1)
        return designs

    def as_batch(self, designs) -> np.ndarray:
        """Normalise a design batch to shape ``(N_b, design_dim)``."""
        d = np.asarray(designs, dtype=float)
        if d.size == 0:
            return np.zeros((0, self.design_dim))
        if d.ndim == 0:
            d = d.reshape(1, 1)
        elif d.ndim == 1:
            d = d.reshape(-1, 1) if self.design_dim == 1 else d.reshape(1, -1)
        if d.ndim != 2 or d.shape[1] != self.design_dim:
            raise InvalidArgumentError(
                f"designs must have shape (N_b, {self.design_dim}), got {np.shape(designs)}"
            )
        return d

    def in_box(self, designs) -> bool:
        d = np.asarray(designs, dtype=float)
        return bool(np.all(d >= self.lower) and np.all(d <= self.upper))

    def clip(self, designs) -> np.ndarray:
        return np.clip(designs, self.lower, self.upper)


def design_matrix(model: LinRegModel, designs) -> np.ndarray:
    batch = model.as_batch(designs)
    if not model.in_box(batch):
        raise InvalidArgumentError("design outside the design box")
    return model.features(batch)


def _check_outcomes(H: np.ndarray, outcomes) -> np.ndarray:
    x = np.atleast_1d(np.asarray(outcomes, dtype=float))
    if x.shape != (H.shape[0],):
        raise InvalidArgumentError(
            f"expected {H.shape[0]} outcomes, got shape {np.shape(outcomes)}"
        )
    return x


def _weighted_update(model: LinRegModel, H: np.ndarray, x: np.ndarray, weight: float):
    prec0 = linalg.cho_solve((model.prior.chol, True), np.eye(model.dim))
    prec = prec0 + (weight / model.noise_var) * H.T @ H
    prec = 0.5 * (prec + prec.T)
    cov = linalg.cho_solve((linalg.cholesky(prec, lower=True), True), np.eye(model.dim))
    cov = 0.5 * (cov + cov.T)
    rhs = prec0 @ model.prior_mean + (weight / model.noise_var) * H.T @ x
    return GaussianDist(cov @ rhs, cov)


def posterior(model: LinRegModel, designs, outcomes) -> GaussianDist:
    H = design_matrix(model, designs)
    return _weighted_update(model, H, _check_outcomes(H, outcomes), 1.0)


def tilted_posterior(model: LinRegModel, designs, outcomes, order) -> GaussianDist:
    """Prior times the likelihood raised to ``alpha``."""
    a = as_alpha(order)
    H = design_matrix(model, designs)
    return _weighted_update(model, H, _check_outcomes(H, outcomes), a)


def nominal_marginal(model: LinRegModel, designs) -> GaussianDist:
    H = design_matrix(model, designs)
    return GaussianDist(H @ model.prior_mean,
                        H @ model.prior_cov @ H.T + model.noise_var * np.eye(H.shape[0]))


def tilted_marginal(model: LinRegModel, designs, order) -> GaussianDist:
    """Outcome law proportional to ``E_prior[lik ** alpha] ** (1 / alpha)``.

    Gaussian with mean ``H mu0`` and covariance ``alpha H S0 H^T + sigma^2 I``.
    """
    a = as_alpha(order)
    H = design_matrix(model, designs)
    cov = a * (H @ model.prior_cov @ H.T) + model.noise_var * np.eye(H.shape[0])
    return GaussianDist(H @ model.prior_mean, 0.5 * (cov + cov.T))


def sibson_mi(model: LinRegModel, designs, order) -> float:
    """Sibson's alpha-mutual information ``0.5 logdet(I + (alpha/sigma^2) H S0 H^T)``."""
    a = as_alpha(order)
    H = design_matrix(model, designs)
    gram = (a / model.noise_var) * (H @ model.prior_cov @ H.T)
    sign, logdet = np.linalg.slogdet(np.eye(H.shape[0]) + gram)
    return max(0.5 * float(logdet), 0.0)


def worst_case_joint(model: LinRegModel, designs, order) -> GaussianDist:
    """Joint Gaussian over ``(theta, x)`` of the worst-case generative process."""
    a = as_alpha(order)
    H = design_matrix(model, designs)
    S0 = model.prior_cov
    prec = linalg.cho_solve((model.prior.chol, True), np.eye(model.dim))
    prec = prec + (a / model.noise_var) * H.T @ H
    S_tilt = np.linalg.inv(0.5 * (prec + prec.T))
    top = a * S0 + (1.0 - a) * S_tilt
    cross = a * S0 @ H.T
    bottom = a * H @ S0 @ H.T + model.noise_var * np.eye(H.shape[0])
    cov = np.block([[top, cross], [cross.T, bottom]])
    mean = np.concatenate([model.prior_mean, H @ model.prior_mean])
    return GaussianDist(mean, 0.5 * (cov + cov.T))


def _sample_gaussian(dist: GaussianDist, count: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((count, dist.dim))
    return dist.mean + z @ dist.chol.T


def sample_worst_case(model: LinRegModel, designs, order, count: int,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` i.i.d. ``(theta, x)`` pairs from the worst-case joint.

    Returns arrays of shape ``(count, dim)`` and ``(count, N_b)``.
    """
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    try:
        joint = worst_case_joint(model, designs, order)
    except InvalidArgumentError as exc:
        raise EstimationFailedError(f"worst-case joint covariance factorisation failed: {exc}")
    draws = _sample_gaussian(joint, count, rng)
    return draws[:, : model.dim], draws[:, model.dim:]


def sample_nominal(model: LinRegModel, designs, count: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Ancestral draws: theta from the prior, x from the Gaussian likelihood."""
    H = design_matrix(model, designs)
    theta = _sample_gaussian(model.prior, count, rng)
    x = theta @ H.T + np.sqrt(model.noise_var) * rng.standard_normal((count, H.shape[0]))
    return theta, x


def conditional_gain(model: LinRegModel, designs, outcomes, order) -> float:
    """Renyi divergence of order alpha from the nominal posterior to the prior.

    At ``alpha = 1`` this is the KL information gain.
    """
    a = as_alpha(order)
    post = posterior(model, designs, outcomes)
    if a == 1.0:
        return kl_gaussian(post, model.prior)
    return renyi_gaussian(post, model.prior, a)


def log_predictive_density(model: LinRegModel, posterior_dist: GaussianDist,
                           test_designs, test_outcomes) -> float:
    """Sum of pointwise Gaussian log predictive densities of held-out outcomes."""
    if posterior_dist.dim != model.dim:
        raise InvalidArgumentError("posterior dimension does not match the model")
    H = model.features(model.as_batch(test_designs))
    x = _check_outcomes(H, test_outcomes)
    mean = H @ posterior_dist.mean
    var = np.einsum("ij,jk,ik->i", H, posterior_dist.cov, H) + model.noise_var
    return float(np.sum(-0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)))


class LinRegGenerative:
    """Sampling/likelihood capability of a linear-regression model for the nested estimator.

    A design is an ``(N_b, design_dim)`` array; extra leading axes on the
    design broadcast against the sample axes of ``theta``.
    """

    design_ndim = 2

    def __init__(self, model: LinRegModel):
        self.model = model
        self._log_norm = 0.5 * np.log(2.0 * np.pi * model.noise_var)

    def prepare(self, design) -> np.ndarray:
        d = np.asarray(design, dtype=float)
        if d.ndim < 2:
            d = self.model.as_batch(d)
        if not self.model.in_box(d):
            raise InvalidArgumentError("design outside the design box")
        return d

    def sample_prior(self, rng: np.random.Generator, shape) -> np.ndarray:
        shape = tuple(np.atleast_1d(shape))
        d = self.model.dim
        z = rng.standard_normal(shape + (d,))
        # a flat 2-D product is much faster than a stacked matmul
        return self.model.prior_mean + (z.reshape(-1, d) @ self.model.prior.chol.T).reshape(z.shape)

    def _mean(self, theta: np.ndarray, design: np.ndarray) -> np.ndarray:
        H = self.model.features(design)
        return np.einsum("...bd,...d->...b", H, theta)

    def sample_outcome(self, rng: np.random.Generator, theta: np.ndarray, design) -> np.ndarray:
        mean = self._mean(theta, design)
        return mean + np.sqrt(self.model.noise_var) * rng.standard_normal(mean.shape)

    def log_likelihood(self, x: np.ndarray, theta: np.ndarray, design) -> np.ndarray:
        resid = x - self._mean(theta, design)
        return np.sum(-0.5 * resid**2 / self.model.noise_var - self._log_norm, axis=-1)

    def log_marginal(self, x: np.ndarray, design) -> np.ndarray:
        m = self.model
        H = m.features(design)
        cov = H @ m.prior_cov @ np.swapaxes(H, -1, -2) + m.noise_var * np.eye(H.shape[-2])
        chol = np.linalg.cholesky(cov)
        resid = x - H @ m.prior_mean
        z = np.linalg.solve(chol, resid[..., None])[..., 0]
        logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
        return -0.5 * (np.sum(z**2, axis=-1) + logdet + H.shape[-2] * np.log(2.0 * np.pi))
