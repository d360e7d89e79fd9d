"""Config-driven Monte Carlo experiment harness and CLI."""

from .config import ConfigError, ExperimentConfig, read_config
from .runner import run_preset

__all__ = ["ConfigError", "ExperimentConfig", "read_config", "run_preset"]
