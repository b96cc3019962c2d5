"""
Cell classification: cross-entropy over class logits, macro AUC on held-out
samples.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.special import softmax

from ..core import RunTracker
from ..data import ExpressionDataset, Split
from ..errors import ConfigError, DatasetError
from ..model import BFRegModel
from .base import BaseTask, FitResult, TrainConfig, cross_entropy_graph
from .metrics import macro_auc


class ClassificationTask(BaseTask):
    name = "classify"

    def __init__(self, model: BFRegModel, dataset: ExpressionDataset, config: TrainConfig,
                 generator: np.random.Generator, tracker: Optional[RunTracker] = None,
                 trunk_mode: Optional[str] = None):
        super().__init__(model, config, generator, tracker, trunk_mode)
        if dataset.labels is None:
            raise DatasetError("classification needs a label per sample")
        classes = np.unique(dataset.labels)
        if classes.size < 2:
            raise DatasetError(f"only class {int(classes[0])} present; macro AUC undefined")
        if model.head.output_size != dataset.n_classes:
            raise ConfigError(f"head has {model.head.output_size} outputs for {dataset.n_classes} classes")
        self.dataset = dataset.align(model.source_kb.nodes[model.source_kb.levels[0]])
        self.inputs = self.dataset.values * self.dataset.mask

    def batch_loss(self, leaves, batch):
        trace = self.model.forward_graph(leaves, self.inputs[batch], mode=self.trunk_mode)
        return cross_entropy_graph(self.model.head_graph(leaves, trace.final), self.dataset.labels[batch])

    def probabilities(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.intp)
        return softmax(self.model.predict(self.inputs[indices]), axis=-1)

    def validation_loss(self, indices):
        probs = self.probabilities(indices)
        picked = probs[np.arange(len(indices)), self.dataset.labels[indices]]
        return float(-np.mean(np.log(np.clip(picked, 1e-300, None))))

    def auc(self, indices) -> Optional[float]:
        """Macro AUC on ``indices``; None with a warning when a class is missing there."""
        try:
            return macro_auc(self.probabilities(indices), self.dataset.labels[indices])
        except DatasetError as e:
            logging.warning(f"BFReg: macro AUC skipped: {e}")
            return None


@dataclass
class ClassificationResult:
    model: BFRegModel
    fit: FitResult
    metrics: Dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def losses(self):
        return self.fit.losses


def train_classification(model: BFRegModel, dataset: ExpressionDataset, config: TrainConfig,
                         generator: np.random.Generator, split: Optional[Split] = None,
                         tracker: Optional[RunTracker] = None,
                         trunk_mode: Optional[str] = None) -> ClassificationResult:
    task = ClassificationTask(model, dataset, config, generator, tracker, trunk_mode)
    train = split.train if split is not None else np.arange(task.dataset.n_samples)
    fit = task.fit(train, split.validation if split is not None else None)
    metrics = {"train_auc": task.auc(train)}
    if split is not None:
        metrics["test_auc"] = task.auc(split.test)
    fit.metrics = metrics
    return ClassificationResult(model, fit, metrics)
