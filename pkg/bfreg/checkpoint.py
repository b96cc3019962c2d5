"""
Model checkpoints.

An ``.npz`` container holding every named parameter, the batch-norm running
statistics, and one JSON metadata entry with the model configuration and
the fingerprint of the knowledge base the model was built on.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .errors import CheckpointError
from .knowledge import KnowledgeBase
from .model import BFRegModel, ModelConfig
from .utils import canonical_json

PathLike = Union[str, Path]
META_KEY = "__meta__"
FORMAT_VERSION = 1


def save_checkpoint(model: BFRegModel, path: PathLike, extra: Optional[Dict[str, Any]] = None) -> Path:
    meta = {
        "format": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "knowledge_fingerprint": model.source_kb.fingerprint(),
        "trainable": {name: model.params.is_trainable(name) for name in model.params.names()},
        "extra": extra or {},
    }
    return _write(Path(path), model.snapshot(), meta)


def save_field(vector_field, path: PathLike) -> Path:
    """Parameters of a trained trajectory field, tagged with its pieces and knowledge."""
    meta = {
        "format": FORMAT_VERSION,
        "field_pieces": vector_field.describe(),
        "knowledge_fingerprint": vector_field.kb.fingerprint(),
    }
    return _write(Path(path), vector_field.params.snapshot(), meta)


def _write(path: Path, arrays: Dict[str, np.ndarray], meta: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = dict(arrays)
    arrays[META_KEY] = np.array(canonical_json(meta, indent=None))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    logging.debug(f"BFReg: checkpoint written to {path}")
    return path


def read_checkpoint(path: PathLike) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Raw metadata and arrays."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    except (ValueError, OSError) as e:
        raise CheckpointError(f"{path}: unreadable checkpoint: {e}") from None
    if META_KEY not in arrays:
        raise CheckpointError(f"{path}: checkpoint has no metadata entry")
    meta = json.loads(str(arrays.pop(META_KEY)))
    return meta, arrays


def _check_fingerprint(meta: Dict[str, Any], kb: KnowledgeBase, path: PathLike):
    if meta.get("knowledge_fingerprint") != kb.fingerprint():
        raise CheckpointError(
            f"{path}: checkpoint was built on a different knowledge base "
            f"({meta.get('knowledge_fingerprint', '?')[:12]} != {kb.fingerprint()[:12]})")


def load_checkpoint(path: PathLike, kb: KnowledgeBase) -> BFRegModel:
    """Rebuild the model on ``kb`` and restore every array."""
    meta, arrays = read_checkpoint(path)
    _check_fingerprint(meta, kb, path)
    model = BFRegModel(ModelConfig.from_dict(meta["model_config"]), kb)
    expected = set(model.snapshot())
    if expected != set(arrays):
        missing = sorted(expected - set(arrays))
        stray = sorted(set(arrays) - expected)
        raise CheckpointError(f"{path}: parameter names differ (missing {missing}, unexpected {stray})")
    _restore_checked(model, arrays, path)
    for name, trainable in meta.get("trainable", {}).items():
        if not trainable and name in model.params:
            model.params.freeze([name])
    return model


def load_trunk(model: BFRegModel, path: PathLike):
    """Copy trunk parameters (and running statistics) from a checkpoint into
    ``model``; its head is left as is."""
    meta, arrays = read_checkpoint(path)
    _check_fingerprint(meta, model.source_kb, path)
    wanted = {k: v for k, v in arrays.items() if not k.startswith("head.")}
    missing = sorted(set(model.trunk_names()) - set(wanted))
    if missing:
        raise CheckpointError(f"{path}: checkpoint lacks trunk parameter(s) {missing}")
    _restore_checked(model, wanted, path)


def _restore_checked(model: BFRegModel, arrays: Dict[str, np.ndarray], path: PathLike):
    current = model.snapshot()
    for name, value in arrays.items():
        if name in current and current[name].shape != value.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for '{name}': checkpoint {value.shape}, model {current[name].shape}")
    model.restore({k: v for k, v in arrays.items() if k in current})
