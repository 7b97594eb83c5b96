"""Batch experiments: realised gains, coverage, predictive density and regret.

Every trial draws from generators derived from ``(seed, trial, ...)`` only,
so results do not depend on worker count or scheduling; rows are emitted in
trial order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .. import abtest, linreg, nmc
from ..abtest import ABGenerative, ABModel, Allocation
from ..core import derive_rng
from ..linreg import LinRegGenerative
from ..policy import (
    BoxedGaussianPolicy,
    DiscretePolicy,
    entropic_mirror_descent,
    kl_policies,
    mirror_descent,
    pac_lower_bound,
)
from ..shannon_ref import shannon_eig_abtest, shannon_eig_linreg
from .config import ExperimentConfig
from .designs import optimal_allocation, optimal_linreg_design
from .table import Table

__all__ = ["run_infogain", "run_coverage", "run_elpd", "run_regret", "EXPERIMENTS"]


def _map_trials(fn, count: int, workers: int) -> list:
    if workers <= 1 or count < 2:
        return [fn(i) for i in range(count)]
    chunk = max(1, count // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count), chunksize=chunk))


def _design_repr(design):
    if isinstance(design, Allocation):
        return design.n_a
    return np.asarray(design, dtype=float).ravel()


# realised information gain ----------------------------------------------------

@dataclass(frozen=True)
class _GainSetup:
    model: object
    alpha: float
    nominal_design: object
    robust_design: object
    seed: int


def _sample(model, design, alpha, rng):
    if isinstance(model, ABModel):
        theta, x = abtest.sample_worst_case(model, design, alpha, 1, rng)
    else:
        theta, x = linreg.sample_worst_case(model, design, alpha, 1, rng)
    return theta[0], x[0]


def _gain(model, design, x, alpha):
    module = abtest if isinstance(model, ABModel) else linreg
    return module.conditional_gain(model, design, x, alpha)


def _gain_trial(s: _GainSetup, i: int) -> dict:
    # both designs see the same stream, so alpha = 1 gives identical columns
    _, x_nom = _sample(s.model, s.nominal_design, s.alpha, derive_rng(s.seed, i))
    _, x_rob = _sample(s.model, s.robust_design, s.alpha, derive_rng(s.seed, i))
    return {
        "trial": i,
        "nominal_design": _design_repr(s.nominal_design),
        "robust_design": _design_repr(s.robust_design),
        "nominal_gain": _gain(s.model, s.nominal_design, x_nom, 1.0),
        "robust_gain": _gain(s.model, s.robust_design, x_rob, s.alpha),
    }


def _risk_sensitive_mean(gains: np.ndarray, alpha: float) -> float:
    """``alpha/(1-alpha) log mean exp((1-alpha)/alpha G)``; the plain mean at ``alpha = 1``."""
    if alpha == 1.0 or gains.size == 0:
        return float(np.mean(gains)) if gains.size else math.nan
    c = (1.0 - alpha) / alpha
    return float((logsumexp(c * gains) - math.log(gains.size)) / c)


def _worst_case_gain_mean_exact(model: ABModel, alloc: Allocation, alpha: float) -> float:
    pmf = abtest.tilted_marginal_pmf(model, alloc, alpha)
    total = 0.0
    for xa in range(alloc.n_a + 1):
        for xb in range(alloc.n_b + 1):
            total += pmf[xa, xb] * abtest.conditional_gain(model, alloc, (xa, xb), alpha)
    return total


def run_infogain(config: ExperimentConfig) -> Table:
    """Realised gains under the worst-case process at nominal- and robust-optimal designs."""
    cfg = config.for_experiment("infogain")
    a = cfg.alpha
    if cfg.model == "abtest":
        model = cfg.abtest_model()
        d_nom, _ = optimal_allocation(model, 1.0)
        d_rob, benchmark = optimal_allocation(model, a)
        shannon = shannon_eig_abtest(model, d_nom).value
    else:
        model = cfg.linreg_model()
        d_nom, _ = optimal_linreg_design(model, cfg.batch_size, 1.0)
        d_rob, benchmark = optimal_linreg_design(model, cfg.batch_size, a)
        shannon = shannon_eig_linreg(model, d_nom).value
    setup = _GainSetup(model, a, d_nom, d_rob, cfg.seed)
    rows = _map_trials(partial(_gain_trial, setup), cfg.trials, cfg.workers)
    gains = np.array([r["robust_gain"] for r in rows])
    meta = {
        "experiment": "infogain",
        "config": cfg.to_dict(),
        "nominal_design": _design_repr(d_nom),
        "robust_design": _design_repr(d_rob),
        "sibson_mi_benchmark": benchmark,
        "shannon_eig_nominal": shannon,
        "mean_nominal_gain": float(np.mean([r["nominal_gain"] for r in rows])),
        "mean_robust_gain": float(np.mean(gains)),
        "risk_sensitive_mean_robust_gain": _risk_sensitive_mean(gains, a),
        "expected_robust_gain_exact": (_worst_case_gain_mean_exact(model, d_rob, a)
                                       if cfg.model == "abtest" else None),
    }
    columns = ["trial", "nominal_design", "robust_design", "nominal_gain", "robust_gain"]
    return Table(columns, rows, meta)


# coverage ----------------------------------------------------------------------

@dataclass(frozen=True)
class _CoverageSetup:
    model: object
    alpha: float
    design: object
    levels: tuple
    seed: int


def _level_name(kind: str, level: float) -> str:
    return f"{kind}_{level:g}"


def _in_gaussian(dist, theta, level) -> bool:
    z = np.linalg.solve(dist.chol, theta - dist.mean)
    return bool(z @ z <= stats.chi2.ppf(level, dist.dim))


def _in_beta_pair(pair, theta, level) -> bool:
    tail = 0.5 * (1.0 - math.sqrt(level))
    for dist, t in zip(pair, theta):
        lo, hi = stats.beta.ppf([tail, 1.0 - tail], dist.delta, dist.gamma)
        if not lo <= t <= hi:
            return False
    return True


def _coverage_trial(s: _CoverageSetup, i: int) -> dict:
    theta, x = _sample(s.model, s.design, s.alpha, derive_rng(s.seed, i))
    if isinstance(s.model, ABModel):
        posts = {"nominal": abtest.posterior(s.model, s.design, x),
                 "tilted": abtest.tilted_posterior(s.model, s.design, x, s.alpha)}
        inside = _in_beta_pair
    else:
        posts = {"nominal": linreg.posterior(s.model, s.design, x),
                 "tilted": linreg.tilted_posterior(s.model, s.design, x, s.alpha)}
        inside = _in_gaussian
    row = {"trial": i}
    for kind, post in posts.items():
        for c in s.levels:
            row[_level_name(kind, c)] = int(inside(post, theta, c))
    return row


def run_coverage(config: ExperimentConfig, levels=None) -> Table:
    """Credible-set coverage of nominal and tilted posteriors under worst-case data.

    Data come from the worst-case process at order ``alpha`` and the robust
    optimal design; ``alpha = 1`` is the well-specified control.
    """
    cfg = config.for_experiment("coverage")
    if levels is not None:
        cfg = cfg.replace(levels=tuple(levels))
    if cfg.model == "abtest":
        model = cfg.abtest_model()
        design, _ = optimal_allocation(model, cfg.alpha)
    else:
        model = cfg.linreg_model()
        design, _ = optimal_linreg_design(model, cfg.batch_size, cfg.alpha)
    setup = _CoverageSetup(model, cfg.alpha, design, cfg.levels, cfg.seed)
    rows = _map_trials(partial(_coverage_trial, setup), cfg.trials, cfg.workers)
    columns = ["trial"] + [_level_name(k, c) for k in ("nominal", "tilted") for c in cfg.levels]
    coverage = {k: {f"{c:g}": float(np.mean([r[_level_name(k, c)] for r in rows]))
                    for c in cfg.levels} for k in ("nominal", "tilted")}
    meta = {"experiment": "coverage", "config": cfg.to_dict(), "design": _design_repr(design),
            "coverage": coverage}
    return Table(columns, rows, meta)


# expected log-predictive density -----------------------------------------------

@dataclass(frozen=True)
class _ElpdSetup:
    model: object
    alphas: tuple
    optimal: tuple
    batch_size: int
    test_size: int
    seed: int


def _elpd_linreg(s: _ElpdSetup, design, alpha, rng) -> float:
    m = s.model
    mid = 0.5 * (m.lower + m.upper)
    test = np.tile(mid, (s.test_size, 1))
    full = np.concatenate([np.asarray(design).reshape(-1, m.design_dim), test])
    _, x = linreg.sample_worst_case(m, full, alpha, 1, rng)
    n = full.shape[0] - s.test_size
    post = linreg.tilted_posterior(m, full[:n], x[0, :n], alpha)
    return linreg.log_predictive_density(m, post, test, x[0, n:])


def _elpd_abtest(s: _ElpdSetup, alloc: Allocation, alpha, rng) -> float:
    m = s.model
    t_a = s.test_size // 2
    test = Allocation(t_a, s.test_size - t_a)
    joint_model = ABModel(m.prior_a, m.prior_b, m.total_budget + s.test_size)
    joint = Allocation(alloc.n_a + test.n_a, alloc.n_b + test.n_b)
    _, x = abtest.sample_worst_case(joint_model, joint, alpha, 1, rng)
    # the worst-case law of an outcome sequence depends on its counts only,
    # so a uniformly random split of each group is exact
    x_train = tuple(int(rng.hypergeometric(x[0, k], joint.sizes[k] - x[0, k], alloc.sizes[k]))
                    for k in range(2))
    x_test = tuple(int(x[0, k]) - x_train[k] for k in range(2))
    post = abtest.tilted_posterior(m, alloc, x_train, alpha)
    return abtest.log_predictive_pmf(m, post, test, x_test)


def _random_design(s: _ElpdSetup, rng):
    m = s.model
    if isinstance(m, ABModel):
        return m.allocation(int(rng.integers(0, m.total_budget + 1)))
    return rng.uniform(m.lower, m.upper, size=(s.batch_size, m.design_dim))


def _elpd_trial(s: _ElpdSetup, i: int) -> list[dict]:
    score = _elpd_abtest if isinstance(s.model, ABModel) else _elpd_linreg
    rows = []
    for ai, alpha in enumerate(s.alphas):
        random_design = _random_design(s, derive_rng(s.seed, i, ai, 0))
        row = {"trial": i, "alpha": alpha}
        for rule, design in (("random", random_design), ("optimal", s.optimal[ai])):
            # both rules share the data stream
            row[f"{rule}_design"] = _design_repr(design)
            row[f"{rule}_elpd"] = score(s, design, alpha, derive_rng(s.seed, i, ai, 1))
        rows.append(row)
    return rows


def run_elpd(config: ExperimentConfig, alphas=None) -> Table:
    """Held-out log predictive density of the tilted posterior, random vs optimal designs."""
    cfg = config.for_experiment("elpd")
    if alphas is not None:
        cfg = cfg.replace(alphas=tuple(alphas))
    if cfg.model == "abtest":
        model = cfg.abtest_model()
        optimal = tuple(optimal_allocation(model, a)[0] for a in cfg.alphas)
    else:
        model = cfg.linreg_model()
        optimal = tuple(optimal_linreg_design(model, cfg.batch_size, a)[0] for a in cfg.alphas)
    setup = _ElpdSetup(model, cfg.alphas, optimal, cfg.batch_size, cfg.test_size, cfg.seed)
    nested = _map_trials(partial(_elpd_trial, setup), cfg.trials, cfg.workers)
    rows = [row for trial_rows in nested for row in trial_rows]
    summary = {}
    for a in cfg.alphas:
        sel = [r for r in rows if r["alpha"] == a]
        summary[f"{a:g}"] = {rule: float(np.mean([r[f"{rule}_elpd"] for r in sel]))
                             for rule in ("random", "optimal")}
    meta = {"experiment": "elpd", "config": cfg.to_dict(), "mean_elpd": summary,
            "optimal_designs": {f"{a:g}": _design_repr(d) for a, d in zip(cfg.alphas, optimal)}}
    columns = ["trial", "alpha", "random_design", "random_elpd", "optimal_design", "optimal_elpd"]
    return Table(columns, rows, meta)


# regret ------------------------------------------------------------------------

# stream keys within a repetition
_START, _NAIVE, _PAC, _EVAL, _BOUND = range(5)


@dataclass(frozen=True)
class _RegretSetup:
    cfg: ExperimentConfig
    model: object
    optimum: float


class _LinRegOracle:
    """Noisy (or exact) value of flattened design batches, shape ``(B, q)`` -> ``(B,)``."""

    def __init__(self, model, cfg: ExperimentConfig):
        self.model = model
        self.shape = (cfg.batch_size, model.design_dim)
        self.alpha = cfg.alpha
        self.exact = cfg.oracle == "exact"
        self.gen = LinRegGenerative(model)
        self.nmc = nmc.NmcConfig(cfg.outer_n, cfg.inner_m, cfg.order)

    def value(self, flat) -> float:
        return linreg.sibson_mi(self.model, np.reshape(flat, self.shape), self.alpha)

    def __call__(self, designs, rng):
        designs = np.asarray(designs, dtype=float)
        if self.exact:
            return np.array([self.value(d) for d in designs])
        stack = designs.reshape((designs.shape[0],) + self.shape)
        return nmc.estimate_batch(self.gen, stack, self.nmc, rng)


def _regret_linreg(s: _RegretSetup, r: int) -> dict:
    cfg, model = s.cfg, s.model
    oracle = _LinRegOracle(model, cfg)
    lo = np.tile(model.lower, cfg.batch_size)
    hi = np.tile(model.upper, cfg.batch_size)
    q = lo.size
    start = derive_rng(cfg.seed, r, _START).uniform(lo, hi)
    row = {"rep": r}
    if "naive" in cfg.methods:
        xi = start.copy()
        eye = cfg.fd_step * np.eye(q)
        for it in range(cfg.naive_iters):
            plus, minus = np.clip(xi + eye, lo, hi), np.clip(xi - eye, lo, hi)
            v = oracle(np.concatenate([plus, minus]), derive_rng(cfg.seed, r, _NAIVE, it))
            grad = (v[:q] - v[q:]) / np.diag(plus - minus)
            xi = np.clip(xi + cfg.naive_step * grad, lo, hi)
        value = oracle.value(xi)
        row.update(naive_design=xi, naive_value=value, naive_regret=s.optimum - value,
                   naive_ratio=value / s.optimum)
    if "pac" in cfg.methods:
        pac = cfg.pac()
        prior = BoxedGaussianPolicy.centered(lo, hi, cfg.prior_std)
        init = BoxedGaussianPolicy(start, prior.log_std, lo, hi)
        policy = mirror_descent(oracle, prior, pac, steps=cfg.steps, batch=cfg.batch,
                                seed=(cfg.seed, r, _PAC), lr_mean=cfg.lr_mean,
                                lr_log_std=cfg.lr_log_std, init=init)
        samples = policy.sample(derive_rng(cfg.seed, r, _EVAL), cfg.eval_samples)
        value = float(np.mean([oracle.value(d) for d in samples]))
        bound_rng = derive_rng(cfg.seed, r, _BOUND)
        estimate = float(np.mean(oracle(policy.sample(bound_rng, cfg.batch), bound_rng)))
        kl = kl_policies(policy, prior)
        row.update(pac_design=policy.mean, pac_value=value, pac_regret=s.optimum - value,
                   pac_ratio=value / s.optimum, pac_estimate=estimate, pac_kl=kl,
                   pac_bound=pac_lower_bound(estimate, kl, pac, cfg.outer_n))
    return row


def _regret_abtest(s: _RegretSetup, r: int) -> dict:
    cfg, model = s.cfg, s.model
    curve = abtest.sibson_curve(model, cfg.alpha)
    allocations = np.arange(model.total_budget + 1)
    gen = ABGenerative(model)
    config = nmc.NmcConfig(cfg.outer_n, cfg.inner_m, cfg.order)

    def oracle(rng):
        if cfg.oracle == "exact":
            return curve.copy()
        return nmc.estimate_batch(gen, allocations, config, rng)

    row = {"rep": r}
    if "naive" in cfg.methods:
        k = int(np.argmax(oracle(derive_rng(cfg.seed, r, _NAIVE))))
        value = float(curve[k])
        row.update(naive_design=k, naive_value=value, naive_regret=s.optimum - value,
                   naive_ratio=value / s.optimum)
    if "pac" in cfg.methods:
        pac = cfg.pac()
        prior = DiscretePolicy.uniform(allocations.tolist())
        policy = entropic_mirror_descent(oracle, prior, cfg.lam, cfg.pac_rounds,
                                         seed=(cfg.seed, r, _PAC))
        value = policy.expectation(curve)
        estimate = policy.expectation(oracle(derive_rng(cfg.seed, r, _BOUND)))
        kl = kl_policies(policy, prior)
        row.update(pac_design=int(np.argmax(policy.log_probs)), pac_value=value,
                   pac_regret=s.optimum - value, pac_ratio=value / s.optimum,
                   pac_estimate=estimate, pac_kl=kl,
                   pac_bound=pac_lower_bound(estimate, kl, pac, cfg.outer_n))
    return row


def run_regret(config: ExperimentConfig) -> Table:
    """Naive optimisation of the noisy estimator vs a PAC-Bayes policy, scored in closed form.

    Linear regression: projected finite-difference gradient ascent from a
    random start vs boxed-Gaussian mirror descent started at the same point.
    A/B test: argmax of one noisy estimate per allocation vs entropic mirror
    descent over allocations.
    """
    cfg = config.for_experiment("regret")
    if cfg.model == "abtest":
        model = cfg.abtest_model()
        best, optimum = optimal_allocation(model, cfg.alpha)
        trial = _regret_abtest
    else:
        model = cfg.linreg_model()
        best, optimum = optimal_linreg_design(model, cfg.batch_size, cfg.alpha)
        trial = _regret_linreg
    setup = _RegretSetup(cfg, model, optimum)
    rows = _map_trials(partial(trial, setup), cfg.trials, cfg.workers)
    columns = ["rep"]
    if "naive" in cfg.methods:
        columns += ["naive_design", "naive_value", "naive_regret", "naive_ratio"]
    if "pac" in cfg.methods:
        columns += ["pac_design", "pac_value", "pac_regret", "pac_ratio",
                    "pac_estimate", "pac_kl", "pac_bound"]
    meta = {
        "experiment": "regret",
        "config": cfg.to_dict(),
        "optimum": optimum,
        "optimal_design": _design_repr(best),
        "assumed_constants": {"L_f": cfg.L_f, "C_h": cfg.C_h},
        "naive": ("finite-difference projected gradient ascent, fresh samples per evaluation"
                  if cfg.model == "linreg" else "argmax of one noisy estimate per allocation"),
        "pac": ("boxed-Gaussian natural-gradient mirror descent" if cfg.model == "linreg"
                else f"entropic mirror descent over allocations, {cfg.pac_rounds} rounds"),
    }
    for method in cfg.methods:
        meta[f"mean_{method}_regret"] = float(np.mean([r[f"{method}_regret"] for r in rows]))
    return Table(columns, rows, meta)


EXPERIMENTS = {
    "infogain": run_infogain,
    "coverage": run_coverage,
    "elpd": run_elpd,
    "regret": run_regret,
}
