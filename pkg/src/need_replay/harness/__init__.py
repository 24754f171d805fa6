"""Configuration, orchestration and CLI."""

from .config import ALGORITHMS, EXPERIMENTS, ExperimentConfig
from .runner import RunSummary, describe, run_experiment

__all__ = ["ALGORITHMS", "EXPERIMENTS", "ExperimentConfig", "RunSummary", "describe",
           "run_experiment"]
