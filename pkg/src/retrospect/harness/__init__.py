"""Experiment runner: retry-loop evaluation, baseline comparison and export."""

from .config import EnvConfig, EvalConfig, RunConfig, config_hash, load_config
from .experiment import (
    CSV_COLUMNS,
    CheckpointMissing,
    Comparison,
    ExperimentReport,
    ReflectionAgent,
    TaskFailed,
    compare,
    evaluate,
    read_curves,
    standard_baselines,
)

__all__ = [
    "CSV_COLUMNS", "CheckpointMissing", "Comparison", "EnvConfig", "EvalConfig", "ExperimentReport",
    "ReflectionAgent", "RunConfig", "TaskFailed", "compare", "config_hash", "evaluate", "load_config",
    "read_curves", "standard_baselines",
]
