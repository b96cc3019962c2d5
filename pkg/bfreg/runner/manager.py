"""
BFReg Run Manager
=================

Maps each task name to the harness method that runs it and writes the
files every run leaves behind.

Overview:
    - Registry (`SUPPORTED_TASKS`) lists every task and the `TaskHarness`
      method that runs it.
    - `dispatch` resolves the method, runs it inside a run span, and writes
      `config.resolved.json`, `report.json` and, for model tasks,
      `checkpoint.npz` into the output directory.

Reports hold no timestamps or run ids, so the same config and seed give
byte-identical reports.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from ..checkpoint import save_checkpoint
from ..config import RunConfig
from ..core import RunTracker, clear_current_run, set_current_run
from ..errors import ConfigError
from ..semconv import ReportKeys, SpanKinds
from ..utils import canonical_json, sha256_files
from .harnesses import TaskHarness

# --- Configuration Registry ---

SUPPORTED_TASKS: Dict[str, Dict[str, str]] = {
    "impute": {"harness": "run_impute"},
    "classify": {"harness": "run_classify"},
    "forecast": {"harness": "run_forecast"},
    "trajectory": {"harness": "run_trajectory"},
    "discover": {"harness": "run_discover"},
    "synth": {"harness": "run_synth"},
    "validate": {"harness": "run_validate"},
}

REPORT_FILE = "report.json"
RESOLVED_CONFIG_FILE = "config.resolved.json"
CHECKPOINT_FILE = "checkpoint.npz"
RUN_LOG_FILE = "run.log"


@dataclass
class RunResult:
    out: Path
    report: Dict
    files: List[Path] = field(default_factory=list)


def write_json(path: Path, doc) -> Path:
    path.write_text(canonical_json(doc) + "\n", encoding="utf-8")
    return path


def build_report(config: RunConfig, metrics: Dict, knowledge_files, data_files) -> Dict:
    return {
        ReportKeys.TASK: config.task,
        ReportKeys.SEED: config.seed,
        ReportKeys.CONFIG_HASH: config.config_hash(),
        ReportKeys.KNOWLEDGE_HASH: sha256_files(knowledge_files) if knowledge_files else None,
        ReportKeys.DATA_HASH: sha256_files(data_files) if data_files else None,
        ReportKeys.METRICS: metrics,
    }


def dispatch(config: RunConfig, out: Optional[Path] = None,
             tracker: Optional[RunTracker] = None) -> RunResult:
    """
    Run ``config`` and write its files. Harness errors end the run span as
    failed and propagate unchanged.
    """
    entry = SUPPORTED_TASKS.get(config.task)
    if entry is None:
        raise ConfigError(f"unknown task '{config.task}'; known: {sorted(SUPPORTED_TASKS)}")
    out = Path(out if out is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    own_tracker = tracker is None
    if own_tracker:
        tracker = RunTracker(task=config.task, seed=config.seed, log_path=out / RUN_LOG_FILE)

    files = [write_json(out / RESOLVED_CONFIG_FILE, config.to_dict())]
    harness = TaskHarness(config, out, tracker)
    method = getattr(harness, entry["harness"], None)
    if method is None:
        raise ConfigError(f"task '{config.task}' has no harness method '{entry['harness']}'")

    set_current_run(tracker.run_id)
    logging.info(f"BFReg: starting '{config.task}' run (seed {config.seed}) into {out}")
    try:
        with tracker.track(f"run.{config.task}", kind=SpanKinds.RUN):
            outcome = method()
    finally:
        clear_current_run()
        if own_tracker:
            tracker.shutdown()

    if outcome.model is not None:
        files.append(save_checkpoint(outcome.model, out / CHECKPOINT_FILE,
                                     extra={"task": config.task, "seed": config.seed}))
    files.extend(outcome.written)
    report = build_report(config, outcome.metrics, outcome.knowledge_files, outcome.data_files)
    files.append(write_json(out / REPORT_FILE, report))
    logging.info(f"BFReg: '{config.task}' run finished; report at {out / REPORT_FILE}")
    return RunResult(out, report, files)
