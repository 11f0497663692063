"""Experiment harness: configuration, seeded trials, result files and the
self-test gate."""
from .config import ExperimentConfig, load_config, preset
from .runner import make_truth, run_denoise_1d, run_denoise_2d, run_experiment, run_sweep
from .selftest import run_selftest

__all__ = [
    "ExperimentConfig",
    "load_config",
    "preset",
    "make_truth",
    "run_denoise_1d",
    "run_denoise_2d",
    "run_experiment",
    "run_sweep",
    "run_selftest",
]
