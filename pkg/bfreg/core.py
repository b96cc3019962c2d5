"""
Core run tracking for BFReg
"""

import contextvars
import json
import logging
import threading
import time
import traceback
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from datetime import datetime
from typing import Any, Dict, List, Optional
from uuid import uuid4

from .semconv import SpanKinds, TrackerEvents, get_common_span_attributes
from .utils import format_run_stats, generate_run_id

# Context variable for the enclosing span
current_span_id_context = contextvars.ContextVar('current_span_id', default=None)

# Context variable for the active run
_current_run_ctx = contextvars.ContextVar('current_run_id', default=None)


def set_current_run(run_id: str):
    """Set the current run id for the current thread or task."""
    _current_run_ctx.set(run_id)


def get_current_run() -> Optional[str]:
    return _current_run_ctx.get()


def clear_current_run():
    _current_run_ctx.set(None)


@dataclass
class SpanRecord:
    """Data structure for one finished unit of training work"""
    run_id: str
    span_id: str
    parent_span_id: Optional[str]
    name: str
    kind: str
    task: Optional[str]
    epoch: Optional[int]
    loss: Optional[float]
    val_loss: Optional[float]
    metrics: Dict[str, Any]
    attributes: Dict[str, Any]
    timestamp: str
    start_time: float
    end_time: float
    duration: float
    tags: List[str]
    error_report: Optional[Dict] = None
    status: str = "SUCCESS"


class TrainingSpan:
    """
    Represents a single unit of training work.

    A span covers an epoch, an interval of a trajectory fit, a discovery repeat
    or a whole run. It collects timing, losses and, on failure, an error report.
    """

    def __init__(self, run_id, name, kind=SpanKinds.EPOCH, task=None, seed=None,
                 epoch=None, tags=None):
        self.span_id = str(uuid4())
        self.parent_span_id = current_span_id_context.get()
        self.run_id = run_id
        self.name = name
        self.kind = kind
        self.task = task
        self.epoch = epoch
        self.tags = tags or []
        self.loss = None
        self.val_loss = None
        self.metrics: Dict[str, Any] = {}
        self.attributes = get_common_span_attributes(run_id, task, seed)
        self.error_report = None
        self.status = "SUCCESS"
        self.start_time = None
        self.end_time = None

    def start(self):
        """Start the span timer"""
        self.start_time = time.time()

    def end(self, success=True, error=None):
        """End the span and record results"""
        self.end_time = time.time()
        self.status = "SUCCESS" if success else "FAILURE"
        if error:
            self.error_report = {
                "error_type": type(error).__name__,
                "error_message": str(error),
                "stack_trace": traceback.format_exc()
            }

    def to_record(self) -> SpanRecord:
        duration = (
            self.end_time - self.start_time) if self.end_time and self.start_time else 0
        return SpanRecord(
            run_id=self.run_id,
            span_id=self.span_id,
            parent_span_id=self.parent_span_id,
            name=self.name,
            kind=self.kind,
            task=self.task,
            epoch=self.epoch,
            loss=self.loss,
            val_loss=self.val_loss,
            metrics=dict(self.metrics),
            attributes=dict(self.attributes),
            timestamp=datetime.fromtimestamp(
                self.start_time).isoformat() if self.start_time else datetime.now().isoformat(),
            start_time=self.start_time,
            end_time=self.end_time,
            duration=duration,
            tags=list(self.tags),
            error_report=self.error_report,
            status=self.status,
        )


class RunTracker:
    """
    Collects training spans for one run and logs each finished span as a JSON
    record on a dedicated per-run logger.

    Thread-safe: discovery repeats may end spans from worker threads.
    """

    def __init__(self, run_id=None, task=None, seed=None, tags=None, log_path=None):
        self.run_id = run_id or generate_run_id()
        self.task = task
        self.seed = seed
        self.tags = tags or []

        self.setup_logging(log_path)
        self._lock = threading.Lock()
        self._active_spans: Dict[str, TrainingSpan] = {}
        self._completed: List[SpanRecord] = []

        logging.info(f"BFReg: RunTracker initialized - Run: {self.run_id}, Task: {self.task}")

    def setup_logging(self, log_path=None):
        """
        Configure the dedicated logger for this run. Existing handlers are
        removed so a re-used run id never logs twice. With ``log_path`` the
        records also go to that file.
        """
        self.run_logger = logging.getLogger(f'bfreg_run_{self.run_id}')
        self.run_logger.setLevel(logging.INFO)
        for handler in self.run_logger.handlers[:]:
            self.run_logger.removeHandler(handler)
            handler.close()
        if log_path is not None:
            handler = logging.FileHandler(log_path, encoding="utf-8")
            handler.setFormatter(logging.Formatter('%(asctime)s - %(message)s'))
            self.run_logger.addHandler(handler)
            self.run_logger.propagate = False

    def start_span(self, name, kind=SpanKinds.EPOCH, epoch=None) -> TrainingSpan:
        span = TrainingSpan(self.run_id, name, kind=kind, task=self.task, seed=self.seed,
                            epoch=epoch, tags=self.tags)
        with self._lock:
            self._active_spans[span.span_id] = span
        span.start()
        return span

    def end_span(self, span, success=True, error=None):
        span.end(success, error)
        with self._lock:
            self._active_spans.pop(span.span_id, None)
            record = span.to_record()
            self._completed.append(record)
            self.log_record(record)

    @contextmanager
    def track(self, name, kind=SpanKinds.EPOCH, epoch=None):
        """
        Run a block inside a span. Failures end the span with an error report
        and are re-raised unchanged.
        """
        span = self.start_span(name, kind=kind, epoch=epoch)
        token = current_span_id_context.set(span.span_id)
        try:
            yield span
        except Exception as e:
            logging.error(f"BFReg: span '{name}' failed: {e}")
            self.end_span(span, success=False, error=e)
            raise
        else:
            self.end_span(span, success=True)
        finally:
            current_span_id_context.reset(token)

    def log_record(self, record: SpanRecord):
        log_entry = {"event_type": TrackerEvents.SPAN_END, "data": asdict(record)}
        self.run_logger.info(json.dumps(log_entry, default=str))

    def completed(self) -> List[SpanRecord]:
        with self._lock:
            return list(self._completed)

    def stats(self) -> Dict[str, Any]:
        with self._lock:
            records = list(self._completed)
            active = len(self._active_spans)
        val_losses = [r.val_loss for r in records if r.val_loss is not None]
        return {
            "run_id": self.run_id,
            "task": self.task,
            "total_spans": len(records),
            "successful_spans": sum(r.status == "SUCCESS" for r in records),
            "failed_spans": sum(r.status != "SUCCESS" for r in records),
            "best_val_loss": min(val_losses) if val_losses else None,
            "active_spans": active,
        }

    def summary(self) -> str:
        return format_run_stats(self.stats())

    def add_tags(self, tags: List[str]):
        with self._lock:
            for tag in tags:
                if tag not in self.tags:
                    self.tags.append(tag)
        logging.info(f"BFReg: Added tags: {tags}")

    def shutdown(self):
        logging.debug(f"BFReg: RunTracker.shutdown() called for run {self.run_id}.")
        for handler in self.run_logger.handlers[:]:
            handler.flush()
            handler.close()
            self.run_logger.removeHandler(handler)
        logging.debug("BFReg: RunTracker.shutdown() finished.")


# --- Global Tracker Instance ---

_global_tracker: Optional[RunTracker] = None
_init_lock = threading.Lock()


def init_tracker(**kwargs) -> RunTracker:
    """Create the global tracker once; later calls return the existing one."""
    global _global_tracker
    with _init_lock:
        if _global_tracker is None:
            _global_tracker = RunTracker(**kwargs)
    return _global_tracker


def get_tracker() -> Optional[RunTracker]:
    """
    Get the global tracker instance.
    """
    return _global_tracker


def reset_tracker():
    """Shut down and forget the global tracker."""
    global _global_tracker
    with _init_lock:
        if _global_tracker is not None:
            _global_tracker.shutdown()
        _global_tracker = None


def resolve_tracker(tracker: Optional[RunTracker] = None, task: Optional[str] = None) -> RunTracker:
    """The explicit tracker, else the global one, else a private tracker."""
    if tracker is not None:
        return tracker
    if _global_tracker is not None:
        return _global_tracker
    return RunTracker(run_id=get_current_run(), task=task)
