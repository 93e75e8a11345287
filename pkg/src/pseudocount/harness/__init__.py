"""Experiment specs, seeded runners, metrics, presets and the CLI."""

from pseudocount.harness.metrics import RunMetrics, auc, improvement_report, windowed_returns
from pseudocount.harness.presets import PRESETS, intrinsic_only_preset, preset
from pseudocount.harness.runner import (
    lr_schedule_sweep,
    pg_comparison,
    pg_statistics,
    run_experiment,
    run_seed,
    run_spec,
)
from pseudocount.harness.spec import ExperimentSpec

__all__ = [
    "ExperimentSpec",
    "PRESETS",
    "RunMetrics",
    "auc",
    "improvement_report",
    "intrinsic_only_preset",
    "lr_schedule_sweep",
    "pg_comparison",
    "pg_statistics",
    "preset",
    "run_experiment",
    "run_seed",
    "run_spec",
    "windowed_returns",
]
