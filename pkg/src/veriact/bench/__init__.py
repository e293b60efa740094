"""Benchmark harness: experiment configs, episode runner, latency model,
reports, and the command-line interface."""

from .config import (
    ConfigError,
    ExperimentConfig,
    PolicyConfig,
    SuiteEntry,
    VerifierConfig,
    load_config,
    parse_config,
)
from .latency import LatencyModel, simulate_latency
from .report import (
    CategoryRow,
    RunReport,
    SweepReport,
    SweepRow,
    TimestepRow,
    load_report,
    render_report_csv,
    save_report,
)
from .runner import EpisodeResult, run_episode, run_experiment, sweep_matched_compute

__all__ = [
    "CategoryRow",
    "ConfigError",
    "EpisodeResult",
    "ExperimentConfig",
    "LatencyModel",
    "PolicyConfig",
    "RunReport",
    "SuiteEntry",
    "SweepReport",
    "SweepRow",
    "TimestepRow",
    "VerifierConfig",
    "load_config",
    "load_report",
    "parse_config",
    "render_report_csv",
    "run_episode",
    "run_experiment",
    "save_report",
    "simulate_latency",
    "sweep_matched_compute",
]
