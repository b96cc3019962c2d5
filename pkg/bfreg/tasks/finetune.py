"""
Pre-train / fine-tune.

A trained trunk (optionally read from a checkpoint) gets a fresh head; the
trunk is frozen and runs with batch-norm in eval mode, so only the head
changes while the new task trains.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

import numpy as np

from ..checkpoint import load_trunk
from ..errors import ConfigError, TrainingError
from ..model import BFRegModel, HeadSpec
from .base import FitResult
from .classification import train_classification
from .forecasting import train_forecast_recurrent, train_forecast_simultaneous
from .imputation import train_imputation

FINETUNE_HARNESSES: Dict[str, Callable[..., Any]] = {
    "impute": train_imputation,
    "classify": train_classification,
    "forecast.simultaneous": train_forecast_simultaneous,
    "forecast.recurrent": train_forecast_recurrent,
}


@dataclass
class FinetuneResult:
    model: BFRegModel
    fit: FitResult
    trunk_hash_before: str
    trunk_hash_after: str
    metrics: Dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def trunk_unchanged(self) -> bool:
        return self.trunk_hash_before == self.trunk_hash_after


def pretrain_finetune(model: BFRegModel, head: HeadSpec, task: str, *args,
                      generator: np.random.Generator,
                      checkpoint: Optional[Union[str, Path]] = None, **kwargs) -> FinetuneResult:
    """
    Fine-tune ``model``'s new head on ``task``. Positional ``args`` and extra
    keyword arguments go to the task harness (dataset, [horizon,] config,
    split, tracker). Raises ``TrainingError`` when the frozen trunk changes.
    """
    harness = FINETUNE_HARNESSES.get(task)
    if harness is None:
        raise ConfigError(f"no fine-tuning harness for task '{task}'; known: {sorted(FINETUNE_HARNESSES)}")
    if checkpoint is not None:
        load_trunk(model, checkpoint)
    model.replace_head(head, generator)
    before = model.trunk_hash()
    model.freeze_trunk()
    logging.info(f"BFReg: fine-tuning head on '{task}' with {len(model.trunk_names())} frozen trunk arrays")
    try:
        result = harness(model, *args, generator=generator, trunk_mode="eval", **kwargs)
    finally:
        model.unfreeze_trunk()
    after = model.trunk_hash()
    if before != after:
        raise TrainingError("trunk parameters changed during fine-tuning")
    return FinetuneResult(model, result.fit, before, after, dict(result.metrics))
