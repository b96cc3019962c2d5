"""Task registry and harnesses behind the command line."""

from .harnesses import FORECAST_TRAINERS, HarnessOutcome, TaskHarness
from .manager import (
    CHECKPOINT_FILE, REPORT_FILE, RESOLVED_CONFIG_FILE, SUPPORTED_TASKS, RunResult, build_report,
    dispatch,
)

__all__ = [
    "CHECKPOINT_FILE",
    "FORECAST_TRAINERS",
    "HarnessOutcome",
    "REPORT_FILE",
    "RESOLVED_CONFIG_FILE",
    "RunResult",
    "SUPPORTED_TASKS",
    "TaskHarness",
    "build_report",
    "dispatch",
]
