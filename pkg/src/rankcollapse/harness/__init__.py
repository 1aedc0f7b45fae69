"""Configuration, experiment drivers and the command-line interface."""

from .config import ConfigError, ExperimentConfig, make_config
from .experiments import run_equilibrium, run_experiment, run_sweep, run_verify, verify

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "make_config",
    "run_equilibrium",
    "run_experiment",
    "run_sweep",
    "run_verify",
    "verify",
]
