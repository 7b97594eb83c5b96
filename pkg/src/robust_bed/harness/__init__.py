"""Batch experiment drivers emitting plot-ready CSV tables."""

from .config import EXPERIMENT_DEFAULTS, ExperimentConfig, read_config
from .designs import optimal_allocation, optimal_linreg_design
from .experiments import EXPERIMENTS, run_coverage, run_elpd, run_infogain, run_regret
from .table import Table, format_value, meta_path, read_csv, write_csv, write_meta

__all__ = [
    "ExperimentConfig",
    "EXPERIMENT_DEFAULTS",
    "EXPERIMENTS",
    "read_config",
    "Table",
    "run_infogain",
    "run_coverage",
    "run_elpd",
    "run_regret",
    "write_csv",
    "format_value",
    "read_csv",
    "write_meta",
    "meta_path",
    "optimal_linreg_design",
    "optimal_allocation",
]
