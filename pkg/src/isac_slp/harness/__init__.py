"""Experiment orchestration: configuration, Monte Carlo runs, tables and CLI."""

from .config import ConfigError, ExperimentSpec, load_config, loads_config, profile_spec
from .experiments import run_distance_sweep, run_roc, run_scheme, run_solve
from .table import ExperimentTable, emit_table, read_table
from .validate import run_validate

__all__ = [
    "ConfigError", "ExperimentSpec", "ExperimentTable", "emit_table", "load_config",
    "loads_config", "profile_spec", "read_table", "run_distance_sweep", "run_roc",
    "run_scheme", "run_solve", "run_validate",
]
