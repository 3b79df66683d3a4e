"""Experiment orchestration: configs, training grids, sweeps, reports and the toy Adam study."""

from .config import ExperimentConfig, parse_experiment, to_text
from .runner import RunResult, report, run_grid, run_single, run_sweep
from .toy import ToyProblemConfig, run_toy

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "ToyProblemConfig",
    "parse_experiment",
    "report",
    "run_grid",
    "run_single",
    "run_sweep",
    "run_toy",
    "to_text",
]
