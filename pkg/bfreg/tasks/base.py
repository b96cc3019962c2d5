"""
Base Task for BFReg
===================

The training loop shared by every downstream task: seeded minibatches, one
Adam step per batch, validation after each epoch, and the parameters with
the smallest validation loss restored at the end. Each epoch runs inside a
tracker span; a non-finite value anywhere aborts with
``TrainingDivergedError``.

Subclasses define the batch loss and the validation loss.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core import RunTracker, resolve_tracker
from ..errors import ConfigError, DatasetError, NonFiniteError, TrainingDivergedError
from ..model import BFRegModel
from ..numerics import (
    AdamState, Tensor, adam_step, evaluate_with_gradients, log_softmax, reduce_sum,
    square,
)
from ..semconv import SpanKinds

LOSS_SUPPORTS = ("measured", "hidden")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    mask_probability: float = 0.6
    select_best: bool = True
    # imputation loss over every measured entry or only the hidden ones
    loss_support: str = "measured"

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch size must be >= 2 for batch normalisation, got {self.batch_size}")
        if not 0.0 <= self.mask_probability < 1.0:
            raise ConfigError(f"mask probability must lie in [0, 1), got {self.mask_probability}")
        if self.loss_support not in LOSS_SUPPORTS:
            raise ConfigError(f"loss support must be one of {LOSS_SUPPORTS}, got {self.loss_support!r}")


@dataclass
class FitResult:
    losses: List[float] = field(default_factory=list)
    val_losses: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_loss: Optional[float] = None
    metrics: Dict[str, Optional[float]] = field(default_factory=dict)


def masked_mse_graph(predicted: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean squared error over entries where ``mask`` is 1."""
    mask = np.asarray(mask, dtype=np.float64)
    total = mask.sum()
    if total == 0:
        raise DatasetError("loss support is empty")
    return reduce_sum(square(predicted - target) * mask) * (1.0 / total)


def cross_entropy_graph(logits: Tensor, labels: np.ndarray) -> Tensor:
    onehot = np.eye(logits.shape[-1])[np.asarray(labels, dtype=np.intp)]
    return reduce_sum(log_softmax(logits) * onehot) * (-1.0 / len(labels))


def minibatches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    """Consecutive slices of ``order``; a trailing single sample joins the
    previous batch so every batch has at least two samples."""
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


class BaseTask(ABC):
    """
    Abstract base class for training harnesses.

    ``trunk_mode`` is the batch-norm mode the trunk runs in while training;
    fine-tuning keeps it at "eval" so the frozen trunk behaves as at
    inference.
    """

    name = "task"
    trunk_mode = "train"

    def __init__(self, model: BFRegModel, config: TrainConfig,
                 generator: np.random.Generator, tracker: Optional[RunTracker] = None,
                 trunk_mode: Optional[str] = None):
        self.model = model
        if trunk_mode is not None:
            self.trunk_mode = trunk_mode
        self.config = config
        self.generator = generator
        self.tracker = resolve_tracker(tracker, task=self.name)

    @abstractmethod
    def batch_loss(self, leaves: Dict[str, Tensor], batch: np.ndarray) -> Tensor:
        """Scalar training loss on one minibatch of training items."""

    @abstractmethod
    def validation_loss(self, indices: np.ndarray) -> float:
        """Loss on held-out items with the model in eval mode."""

    def fit(self, train: Sequence[int], validation: Optional[Sequence[int]] = None) -> FitResult:
        cfg = self.config
        train = np.asarray(train, dtype=np.intp)
        validation = None if validation is None or len(validation) == 0 else np.asarray(validation, dtype=np.intp)
        if cfg.epochs and len(train) < 2:
            raise DatasetError(f"{self.name}: need at least 2 training items, got {len(train)}")
        result = FitResult()
        state = AdamState(lr=cfg.lr)
        best = self.model.snapshot()
        best_val = np.inf
        logging.info(f"BFReg: {self.name} training for {cfg.epochs} epochs on {len(train)} items")

        for epoch in range(cfg.epochs):
            with self.tracker.track(f"{self.name}.epoch", kind=SpanKinds.EPOCH, epoch=epoch) as span:
                try:
                    epoch_loss = self._run_epoch(state, train)
                    val_loss = self.validation_loss(validation) if validation is not None else None
                except NonFiniteError as e:
                    raise TrainingDivergedError(
                        f"{self.name}: training diverged at epoch {epoch}: {e}") from e
                span.loss = epoch_loss
                span.val_loss = val_loss
            result.losses.append(epoch_loss)
            if val_loss is not None:
                result.val_losses.append(val_loss)
            logging.debug(f"BFReg: {self.name} epoch {epoch} loss={epoch_loss:.6g}"
                          + (f" val={val_loss:.6g}" if val_loss is not None else ""))
            score = val_loss if val_loss is not None else epoch_loss
            if score < best_val:
                best_val = score
                result.best_epoch = epoch
                if cfg.select_best:
                    best = self.model.snapshot()

        if cfg.epochs and cfg.select_best:
            self.model.restore(best)
        if result.best_epoch is not None:
            result.best_val_loss = float(best_val)
        logging.info(f"BFReg: {self.name} finished; best epoch {result.best_epoch}")
        return result

    def _run_epoch(self, state: AdamState, train: np.ndarray) -> float:
        order = self.generator.permutation(train)
        total, seen = 0.0, 0
        for batch in minibatches(order, self.config.batch_size):
            value, grads = evaluate_with_gradients(
                lambda leaves: self.batch_loss(leaves, batch), self.model.params)
            loss = float(value.reshape(-1)[0])
            if not np.isfinite(loss):
                raise NonFiniteError("loss is not finite")
            adam_step(state, grads, self.model.params)
            total += loss * len(batch)
            seen += len(batch)
        return total / seen
