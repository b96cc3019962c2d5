"""
Utility functions for BFReg
===========================

Run identifiers, content hashing for provenance, canonical JSON, and
human-readable run statistics.
"""

import hashlib
import json
import uuid
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Union

import numpy as np

PathLike = Union[str, Path]


def generate_run_id() -> str:
    """
    Generate a globally unique identifier for a run.

    Returns:
        str: A UUID4 string. Never written into metric reports.
    """
    return str(uuid.uuid4())


def _json_default(value: Any):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def canonical_json(obj: Any, indent: int = 2) -> str:
    """JSON with sorted keys and fixed indentation; stable across runs."""
    return json.dumps(obj, sort_keys=True, indent=indent, default=_json_default)


def sha256_json(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj, indent=None).encode("utf-8")).hexdigest()


def sha256_files(paths: Iterable[PathLike]) -> str:
    """
    Hash the contents of files in sorted path order.

    Each file contributes its path name and its bytes, so renaming a file
    or reordering content both change the digest.
    """
    digest = hashlib.sha256()
    for path in sorted(str(p) for p in paths):
        digest.update(Path(path).name.encode("utf-8"))
        digest.update(b"\0")
        digest.update(Path(path).read_bytes())
        digest.update(b"\0")
    return digest.hexdigest()


def sha256_arrays(arrays: Mapping[str, np.ndarray]) -> str:
    """Hash named arrays by name, shape and exact bytes."""
    digest = hashlib.sha256()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
        digest.update(name.encode("utf-8"))
        digest.update(str(arr.shape).encode("utf-8"))
        digest.update(arr.tobytes())
    return digest.hexdigest()


def format_run_stats(stats: Dict) -> str:
    """
    Format run-level summary statistics as a human-readable string.

    Args:
        stats (Dict): Expected keys: 'run_id', 'task', 'total_spans',
            'successful_spans', 'failed_spans', 'best_val_loss', 'active_spans'

    Returns:
        str: Multiline string with one metric per line.
    """
    best = stats.get("best_val_loss")
    best_text = f"{best:.6g}" if isinstance(best, (int, float)) else "n/a"
    return f"""
Run Statistics:
   Run ID: {stats['run_id']}
   Task: {stats.get('task') or 'unknown'}
   Total Spans: {stats['total_spans']}
   Successful: {stats['successful_spans']}
   Failed: {stats['failed_spans']}
   Best Validation Loss: {best_text}
   Active Spans: {stats['active_spans']}
"""
