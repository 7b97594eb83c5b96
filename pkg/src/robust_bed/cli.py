"""Command-line interface.

``mi``, ``estimate`` and ``calibrate`` print ``name=value`` pairs on a
single line; the experiment subcommands write a CSV (plus a ``.meta.json``
sidecar) and print its path. Exit status is 0 on success, 1 on a domain or
runtime error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Sequence

import numpy as np

from . import abtest, linreg, nmc
from .abtest import ABGenerative
from .core import Order, calibrate_beta
from .errors import InvalidArgumentError, RobustBedError
from .harness import EXPERIMENTS, ExperimentConfig, format_value, read_config, write_csv, write_meta
from .linreg import LinRegGenerative
from .renyi import BetaDist

SEED_ENV = "ROBUST_BED_SEED"
DEFAULT_BETA_GRID = tuple(np.geomspace(1e-2, 1e2, 81))


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _design(text: str):
    try:
        if ";" in text:
            return np.array([[float(v) for v in row.split(",")] for row in text.split(";") if row])
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse design {text!r}")


def _model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=("linreg", "abtest"), default="linreg")
    g.add_argument("--alpha", type=float, default=0.5, help="order in (0, 1]")
    g.add_argument("--design", type=_design, default=None,
                   help="linreg designs: '0.5,-1' for scalar designs, 'a,b;c,d' for vectors")
    g.add_argument("--dim", type=int, default=2, help="linreg parameter dimension")
    g.add_argument("--feature", choices=linreg.FEATURE_MAPS, default="affine")
    g.add_argument("--noise-var", type=float, default=1.0)
    g.add_argument("--prior-var", type=float, default=1.0)
    g.add_argument("--na", type=int, default=None, help="abtest group-a size")
    g.add_argument("--nx", type=int, default=25, help="abtest total budget")
    g.add_argument("--priors", type=_floats, default=[1.0, 1.0, 1.0, 1.0],
                   help="abtest Beta shapes delta_a,gamma_a,delta_b,gamma_b")


def _env_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InvalidArgumentError(f"{SEED_ENV} must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-bed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("mi", help="closed-form Sibson alpha-MI")
    _model_args(p)

    p = sub.add_parser("estimate", help="nested Monte Carlo estimate of Sibson alpha-MI")
    _model_args(p)
    p.add_argument("--outer-n", type=int, default=1000)
    p.add_argument("--inner-m", type=int, default=100)
    p.add_argument("--contrastive-k", type=int, default=None)
    p.add_argument("--exact-ratio", action="store_true")
    p.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")

    p = sub.add_parser("calibrate", help="dual multiplier beta* for a KL budget rho")
    _model_args(p)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--grid", type=_floats, default=None, help="ascending beta grid")

    for name, text in (("infogain", "realised gains under the worst-case process"),
                       ("coverage", "credible-set coverage of nominal and tilted posteriors"),
                       ("elpd", "held-out log predictive density, random vs optimal designs"),
                       ("regret", "naive vs PAC-Bayes design optimisation regret")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", default=None, help="flat JSON config file")
        p.add_argument("--model", choices=("linreg", "abtest"))
        p.add_argument("--alpha", type=float)
        p.add_argument("--alphas", type=_floats)
        p.add_argument("--levels", type=_floats)
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--outer-n", type=int)
        p.add_argument("--inner-m", type=int)
        p.add_argument("--lam", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--nx", type=int)
        p.add_argument("--priors", type=_floats)
        p.add_argument("--dim", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--oracle", choices=("nmc", "exact"))
        p.add_argument("--workers", type=int)
        p.add_argument("--output", default=None)
    return parser


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    return build_parser().parse_args(list(argv))


# one-off evaluations ------------------------------------------------------------

def _ab_model(args):
    da, ga, db, gb = _four(args.priors)
    return abtest.ABModel(BetaDist(da, ga), BetaDist(db, gb), args.nx)


def _four(values):
    if len(values) != 4:
        raise InvalidArgumentError("--priors needs four shapes: delta_a,gamma_a,delta_b,gamma_b")
    return values


def _lr_model(args):
    return linreg.LinRegModel(np.zeros(args.dim), args.prior_var * np.eye(args.dim),
                              args.noise_var, feature=args.feature)


def _ab_alloc(model, args):
    if args.na is None:
        raise InvalidArgumentError("abtest needs --na")
    if not 0 <= args.na <= model.total_budget:
        raise InvalidArgumentError(f"--na must lie in 0..{model.total_budget}")
    return model.allocation(args.na)


def _lr_design(model, args):
    if args.design is None:
        raise InvalidArgumentError("linreg needs --design")
    return model.as_batch(args.design)


def _closed_form(args):
    """Returns ``alpha -> Sibson MI`` for the selected model and design."""
    if args.model == "abtest":
        model = _ab_model(args)
        alloc = _ab_alloc(model, args)
        return lambda a: abtest.sibson_mi(model, alloc, a)
    model = _lr_model(args)
    design = _lr_design(model, args)
    return lambda a: linreg.sibson_mi(model, design, a)


def _cmd_mi(args) -> list[tuple[str, object]]:
    order = Order(args.alpha)
    return [("sibson_mi", _closed_form(args)(order))]


def _cmd_estimate(args) -> list[tuple[str, object]]:
    seed = _env_seed() if args.seed is None else args.seed
    config = nmc.NmcConfig(args.outer_n, args.inner_m, Order(args.alpha),
                           contrastive_k=args.contrastive_k, exact_ratio=args.exact_ratio)
    if args.model == "abtest":
        model = _ab_model(args)
        gen, design = ABGenerative(model), _ab_alloc(model, args)
    else:
        model = _lr_model(args)
        gen, design = LinRegGenerative(model), _lr_design(model, args)
    value = nmc.estimate(gen, design, config, seed)
    return [("estimate", value), ("outer_n", args.outer_n), ("inner_m", args.inner_m),
            ("seed", seed)]


def _cmd_calibrate(args) -> list[tuple[str, object]]:
    mi = _closed_form(args)
    grid = DEFAULT_BETA_GRID if args.grid is None else args.grid
    beta, value = calibrate_beta(lambda b: mi(Order.from_beta(b)), args.rho, grid)
    return [("beta_star", beta), ("alpha_star", beta / (1.0 + beta)), ("value", value)]


# experiments ----------------------------------------------------------------------

_OVERRIDES = ("model", "alpha", "alphas", "levels", "trials", "seed", "outer_n", "inner_m",
              "lam", "delta", "nx", "priors", "dim", "batch_size", "oracle", "workers", "output")


def _experiment_config(args) -> ExperimentConfig:
    """Flags override the config file, which overrides ``$ROBUST_BED_SEED`` for the seed."""
    data = {} if args.config is None else read_config(args.config)
    if "seed" not in data and os.environ.get(SEED_ENV):
        data["seed"] = _env_seed()
    for key in _OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return ExperimentConfig.from_dict(data)


def _cmd_experiment(args) -> list[tuple[str, object]]:
    config = _experiment_config(args)
    table = EXPERIMENTS[args.command](config)
    path = config.output or f"{args.command}.csv"
    write_csv(table, path)
    write_meta(table, path)
    return [("output", path)]


_COMMANDS = {"mi": _cmd_mi, "estimate": _cmd_estimate, "calibrate": _cmd_calibrate}


def dispatch(args: argparse.Namespace) -> int:
    handler = _COMMANDS.get(args.command, _cmd_experiment)
    try:
        pairs = handler(args)
    except (RobustBedError, OSError) as exc:
        print(f"robust-bed {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(" ".join(f"{k}={format_value(v)}" for k, v in pairs))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
