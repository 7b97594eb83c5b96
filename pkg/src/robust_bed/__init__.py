"""Maximin-robust Bayesian experimental design.

Closed-form Sibson alpha-mutual information for conjugate Gaussian linear
regression and the Beta-Binomial A/B test, a nested Monte Carlo estimator
for general models, and PAC-Bayes design policies.
"""

from .core import Order, RegularityConstants, Seed, alpha_from_beta, beta_from_alpha, calibrate_beta
from .errors import (
    CapacityError,
    DegenerateMixtureError,
    EstimationFailedError,
    InfiniteKLError,
    InvalidArgumentError,
    LimitUndefinedError,
    RobustBedError,
)
from .renyi import BetaDist, GaussianDist

__version__ = "0.1.0"

__all__ = [
    "Order",
    "RegularityConstants",
    "Seed",
    "alpha_from_beta",
    "beta_from_alpha",
    "calibrate_beta",
    "GaussianDist",
    "BetaDist",
    "RobustBedError",
    "InvalidArgumentError",
    "LimitUndefinedError",
    "DegenerateMixtureError",
    "EstimationFailedError",
    "CapacityError",
    "InfiniteKLError",
]
