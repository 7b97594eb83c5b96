"""Flat experiment configuration shared by the harness and the CLI."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..abtest import ABModel
from ..core import Order, RegularityConstants
from ..errors import InvalidArgumentError
from ..linreg import FEATURE_MAPS, LinRegModel
from ..policy import PacConfig
from ..renyi import BetaDist

__all__ = ["ExperimentConfig", "EXPERIMENT_DEFAULTS", "MODELS", "read_config"]

MODELS = ("linreg", "abtest")

# Model-size defaults that differ between experiments; explicit values win.
EXPERIMENT_DEFAULTS = {
    "infogain": {"dim": 2, "feature": "affine", "batch_size": 2, "nx": 25},
    "coverage": {"dim": 2, "feature": "affine", "batch_size": 2, "nx": 25},
    "elpd": {"dim": 2, "feature": "affine", "batch_size": 2, "nx": 25},
    "regret": {"dim": 10, "feature": "identity", "batch_size": 1, "nx": 100},
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "linreg"
    alpha: float = 0.5
    trials: int = 1000
    seed: int = 0
    output: str | None = None
    workers: int = 1
    # nested estimator budgets
    outer_n: int = 16
    inner_m: int = 16
    # PAC-Bayes
    lam: float = 500.0
    delta: float = 0.05
    L_f: float = 1.0
    C_h: float = 1.0
    # linear regression
    dim: int | None = None
    feature: str | None = None
    batch_size: int | None = None
    noise_var: float = 1.0
    prior_var: float = 1.0
    lower: float = -1.0
    upper: float = 1.0
    # A/B test
    nx: int | None = None
    priors: tuple = (1.0, 1.0, 1.0, 1.0)
    # coverage / elpd
    levels: tuple = (0.5, 0.8)
    alphas: tuple = (0.05, 0.1, 0.5)
    test_size: int = 10
    # regret
    oracle: str = "nmc"
    methods: tuple = ("naive", "pac")
    naive_iters: int = 100
    naive_step: float = 0.1
    fd_step: float = 0.1
    steps: int = 200
    batch: int = 32
    lr_mean: float = 0.05
    lr_log_std: float = 0.05
    prior_std: float = 0.5
    pac_rounds: int = 8
    eval_samples: int = 1000

    def __post_init__(self):
        for name in ("priors", "levels", "alphas", "methods"):
            value = getattr(self, name)
            if isinstance(value, (list, tuple)):
                object.__setattr__(self, name, tuple(value))
            else:
                raise InvalidArgumentError(f"{name} must be a list")
        if self.model not in MODELS:
            raise InvalidArgumentError(f"model must be one of {MODELS}, got {self.model!r}")
        Order(self.alpha)
        for a in self.alphas:
            Order(a)
        for name in ("trials", "workers", "outer_n", "inner_m", "naive_iters", "steps",
                     "pac_rounds", "eval_samples"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.batch < 2:
            raise InvalidArgumentError("batch must be >= 2")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        if any(not 0.0 < c < 1.0 for c in self.levels):
            raise InvalidArgumentError("credible levels must lie in (0, 1)")
        if len(self.priors) != 4:
            raise InvalidArgumentError("priors needs four shapes: delta_a, gamma_a, delta_b, gamma_b")
        if self.feature is not None and self.feature not in FEATURE_MAPS:
            raise InvalidArgumentError(f"feature must be one of {FEATURE_MAPS}")
        if self.oracle not in ("nmc", "exact"):
            raise InvalidArgumentError("oracle must be 'nmc' or 'exact'")
        if not set(self.methods) <= {"naive", "pac"} or not self.methods:
            raise InvalidArgumentError("methods must be a non-empty subset of ['naive', 'pac']")
        if self.test_size < 0 or (self.batch_size is not None and self.batch_size < 0):
            raise InvalidArgumentError("sizes must be nonnegative")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise InvalidArgumentError("design box needs finite lower < upper")
        PacConfig(self.lam, self.delta)
        if not 0.0 < self.prior_std <= 2.0:
            raise InvalidArgumentError("prior_std must lie in (0, 2]")

    # construction ---------------------------------------------------------

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = sorted(set(data) - set(cls.field_names()))
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in data.items():
            if isinstance(value, dict):
                raise InvalidArgumentError(f"config must be flat; {key!r} is nested")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(read_config(path))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    def for_experiment(self, experiment: str) -> "ExperimentConfig":
        """Fill unset model-size fields with the experiment's defaults."""
        defaults = EXPERIMENT_DEFAULTS[experiment]
        return self.replace(**{k: v for k, v in defaults.items() if getattr(self, k) is None})

    # models ---------------------------------------------------------------

    @property
    def order(self) -> Order:
        return Order(self.alpha)

    def pac(self) -> PacConfig:
        return PacConfig(self.lam, self.delta, RegularityConstants(L_f=self.L_f, C_h=self.C_h))

    def linreg_model(self) -> LinRegModel:
        dim = 2 if self.dim is None else self.dim
        feature = "affine" if self.feature is None else self.feature
        return LinRegModel(np.zeros(dim), self.prior_var * np.eye(dim), self.noise_var,
                           lower=self.lower, upper=self.upper, feature=feature)

    def abtest_model(self) -> ABModel:
        nx = 25 if self.nx is None else self.nx
        da, ga, db, gb = self.priors
        return ABModel(BetaDist(da, ga), BetaDist(db, gb), nx)



def read_config(path) -> dict:
    """Raw key/value pairs of a flat JSON config file (keys not yet validated)."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidArgumentError("config must be a JSON object")
    return data
