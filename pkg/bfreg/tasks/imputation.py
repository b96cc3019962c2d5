"""
Missing-value imputation.

The observation mask marks measured entries. On top of it a seeded fraction
of each sample's measured entries is hidden from the model input; the model
reconstructs the full vector, is trained on every measured entry (or only
the hidden ones with ``loss_support="hidden"``), and is scored on the hidden
measured entries of the test split.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np

from ..core import RunTracker
from ..data import ExpressionDataset, Split
from ..errors import DatasetError, ShapeError
from ..model import BFRegModel
from ..numerics import Tensor
from .base import BaseTask, FitResult, TrainConfig, masked_mse_graph
from .metrics import masked_mse


def mask_expression(x, hidden_indices: Iterable[int]) -> np.ndarray:
    """Copy of ``x`` with the hidden entries set to 0."""
    out = np.array(x, dtype=np.float64)
    idx = np.fromiter(hidden_indices, dtype=np.intp)
    if idx.size and (idx.min() < -out.shape[-1] or idx.max() >= out.shape[-1]):
        raise ShapeError(f"hidden index out of range for length {out.shape[-1]}")
    out[..., idx] = 0.0
    return out


def imputation_loss(predicted, target) -> float:
    """Mean squared error over the non-zero entries of ``target``."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ShapeError(f"prediction {predicted.shape} and target {target.shape} differ")
    support = target != 0
    if not support.any():
        raise DatasetError("imputation loss undefined: target has no non-zero entry")
    return float(np.mean((predicted[support] - target[support]) ** 2))


def draw_hidden(mask: np.ndarray, probability: float, generator: np.random.Generator) -> np.ndarray:
    """Hide each measured entry independently with ``probability``."""
    return ((generator.random(mask.shape) < probability) & (mask > 0)).astype(np.float64)


class ImputationTask(BaseTask):
    name = "impute"

    def __init__(self, model: BFRegModel, dataset: ExpressionDataset, config: TrainConfig,
                 generator: np.random.Generator, tracker: Optional[RunTracker] = None,
                 hidden: Optional[np.ndarray] = None, trunk_mode: Optional[str] = None):
        super().__init__(model, config, generator, tracker, trunk_mode)
        self.dataset = dataset.align(model.source_kb.nodes[model.source_kb.levels[0]])
        if hidden is None:
            hidden = draw_hidden(self.dataset.mask, config.mask_probability, generator)
        self.hidden = hidden
        self.inputs = self.dataset.values * self.dataset.mask * (1.0 - hidden)

    def usable(self, indices) -> np.ndarray:
        """Indices with at least one measured entry; others are skipped with a warning."""
        indices = np.asarray(indices, dtype=np.intp)
        keep = self.dataset.mask[indices].sum(axis=1) > 0
        for i in indices[~keep]:
            logging.warning(f"BFReg: sample {int(i)} has no measured entries; skipped")
        return indices[keep]

    def prediction_graph(self, leaves: Dict[str, Tensor], batch: np.ndarray, mode: str) -> Tensor:
        trace = self.model.forward_graph(leaves, self.inputs[batch], mode=mode)
        return self.model.head_graph(leaves, trace.final)

    def loss_support(self, indices) -> np.ndarray:
        """Entries the training loss covers; hidden ones fall back to all measured when empty."""
        mask = self.dataset.mask[indices]
        if self.config.loss_support == "hidden":
            support = self.hidden[indices] * mask
            if support.sum() > 0:
                return support
        return mask

    def batch_loss(self, leaves, batch):
        predicted = self.prediction_graph(leaves, batch, self.trunk_mode)
        return masked_mse_graph(predicted, self.dataset.values[batch], self.loss_support(batch))

    def predict(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.intp)
        return self.model.predict(self.inputs[indices])

    def validation_loss(self, indices):
        return masked_mse(self.predict(indices), self.dataset.values[indices], self.loss_support(indices))

    def test_mse(self, indices) -> float:
        """MSE on hidden measured entries; all measured entries when none are hidden."""
        indices = np.asarray(indices, dtype=np.intp)
        support = self.hidden[indices] * self.dataset.mask[indices]
        if support.sum() == 0:
            support = self.dataset.mask[indices]
        return masked_mse(self.predict(indices), self.dataset.values[indices], support)


@dataclass
class ImputationResult:
    model: BFRegModel
    fit: FitResult
    hidden: np.ndarray
    metrics: Dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def losses(self):
        return self.fit.losses


def train_imputation(model: BFRegModel, dataset: ExpressionDataset, config: TrainConfig,
                     generator: np.random.Generator, split: Optional[Split] = None,
                     tracker: Optional[RunTracker] = None,
                     hidden: Optional[np.ndarray] = None,
                     trunk_mode: Optional[str] = None) -> ImputationResult:
    """
    Train ``model`` to reconstruct expression vectors. Without a split every
    sample is used for training and no validation selection happens.
    """
    task = ImputationTask(model, dataset, config, generator, tracker, hidden, trunk_mode)
    n = task.dataset.n_samples
    train = task.usable(split.train if split else np.arange(n))
    validation = task.usable(split.validation) if split else None
    fit = task.fit(train, validation)
    metrics = {"train_mse": task.validation_loss(train) if len(train) else None}
    if split is not None:
        test = task.usable(split.test)
        if len(test):
            metrics["test_mse"] = task.test_mse(test)
    fit.metrics = metrics
    return ImputationResult(model, fit, task.hidden, metrics)
