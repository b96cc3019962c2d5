"""
Time-series forecasting.

Every series contributes one window per start position: the input is the
expression vector at ``t0`` and the targets are the next ``horizon`` vectors.
Splits are by series, so no window of a held-out series is seen in training.

Two heads are supported:

- simultaneous: an MLP head emits all ``horizon`` future vectors at once
  from the final embeddings of ``x[t0]``;
- recurrent: a gated cell consumes the final embeddings step by step and
  reads out the next vector. Training feeds the true previous vector
  (teacher forcing); evaluation feeds back its own predictions.
"""

import logging
from abc import abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core import RunTracker
from ..data import SeriesDataset, Split
from ..errors import ConfigError, DatasetError
from ..layers import RecurrentCell, flatten_embeddings
from ..model import BFRegModel
from ..numerics import Tensor, concat, reshape
from .base import BaseTask, FitResult, TrainConfig, masked_mse_graph
from .metrics import masked_mse, mean_series_pcc


def check_horizon(dataset: SeriesDataset, horizon: int):
    if horizon < 1:
        raise DatasetError(f"horizon must be at least 1, got {horizon}")
    if horizon >= dataset.n_steps:
        raise DatasetError(f"horizon {horizon} needs at least {horizon + 1} timestamps, "
                           f"series have {dataset.n_steps}")


@dataclass(frozen=True)
class Windows:
    """(series, start) pairs of every window of the given series."""
    series: np.ndarray
    starts: np.ndarray

    @classmethod
    def of(cls, series_indices: Sequence[int], n_steps: int, horizon: int) -> "Windows":
        starts = np.arange(n_steps - horizon)
        series = np.repeat(np.asarray(series_indices, dtype=np.intp), starts.size)
        return cls(series, np.tile(starts, len(series_indices)))

    def __len__(self):
        return self.series.size


class ForecastTask(BaseTask):
    """Items are window positions into ``self.windows``."""

    name = "forecast"

    def __init__(self, model: BFRegModel, dataset: SeriesDataset, horizon: int, config: TrainConfig,
                 generator: np.random.Generator, tracker: Optional[RunTracker] = None,
                 trunk_mode: Optional[str] = None):
        super().__init__(model, config, generator, tracker, trunk_mode)
        check_horizon(dataset, horizon)
        self.dataset = dataset.align(model.source_kb.nodes[model.source_kb.levels[0]])
        self.horizon = horizon
        self.inputs = self.dataset.values * self.dataset.mask
        self.windows = Windows.of(np.arange(self.dataset.n_series), self.dataset.n_steps, horizon)

    def window_items(self, series_indices: Sequence[int]) -> np.ndarray:
        """Item indices of every window belonging to ``series_indices``."""
        return np.flatnonzero(np.isin(self.windows.series, np.asarray(series_indices, dtype=np.intp)))

    def _targets(self, items: np.ndarray):
        s, t0 = self.windows.series[items], self.windows.starts[items]
        offsets = t0[:, None] + np.arange(1, self.horizon + 1)[None, :]
        return self.dataset.values[s[:, None], offsets], self.dataset.mask[s[:, None], offsets]

    def _first(self, items: np.ndarray) -> np.ndarray:
        return self.inputs[self.windows.series[items], self.windows.starts[items]]

    def batch_loss(self, leaves, batch):
        target, mask = self._targets(batch)
        return masked_mse_graph(self.prediction_graph(leaves, batch, training=True), target, mask)

    @abstractmethod
    def prediction_graph(self, leaves: Dict[str, Tensor], items: np.ndarray, training: bool) -> Tensor:
        """(batch, horizon, n) predictions."""

    def predict(self, items) -> np.ndarray:
        items = np.asarray(items, dtype=np.intp)
        return self.prediction_graph(self.model.params.constants(), items, training=False).numpy()

    def validation_loss(self, items):
        target, mask = self._targets(np.asarray(items, dtype=np.intp))
        return masked_mse(self.predict(items), target, mask)

    def evaluate(self, series_indices: Sequence[int]) -> Dict[str, Optional[float]]:
        """Masked MSE over every window and the per-series PCC average."""
        items = self.window_items(series_indices)
        predicted = self.predict(items)
        target, mask = self._targets(items)
        series = self.windows.series[items]
        per_series_pred, per_series_true = [], []
        for s in np.unique(series):
            rows = series == s
            observed = mask[rows] > 0
            per_series_pred.append(predicted[rows][observed])
            per_series_true.append(target[rows][observed])
        pcc = mean_series_pcc(per_series_pred, per_series_true)
        if pcc is None:
            logging.warning("BFReg: PCC undefined for every evaluated series")
        return {"mse": masked_mse(predicted, target, mask), "pcc": pcc}


class SimultaneousForecastTask(ForecastTask):
    name = "forecast.simultaneous"

    def __init__(self, model, dataset, horizon, config, generator, tracker=None, trunk_mode=None):
        super().__init__(model, dataset, horizon, config, generator, tracker, trunk_mode)
        expected = self.dataset.n_genes * horizon
        if isinstance(model.head, RecurrentCell) or model.head.output_size != expected:
            raise ConfigError(f"simultaneous forecasting needs an MLP head with {expected} outputs")

    def prediction_graph(self, leaves, items, training):
        mode = self.trunk_mode if training else "eval"
        trace = self.model.forward_graph(leaves, self._first(items), mode=mode)
        out = self.model.head_graph(leaves, trace.final)
        return reshape(out, (len(items), self.horizon, self.dataset.n_genes))


class RecurrentForecastTask(ForecastTask):
    name = "forecast.recurrent"

    def __init__(self, model, dataset, horizon, config, generator, tracker=None, trunk_mode=None):
        super().__init__(model, dataset, horizon, config, generator, tracker, trunk_mode)
        if not isinstance(model.head, RecurrentCell) or model.head.output_size != self.dataset.n_genes:
            raise ConfigError(f"recurrent forecasting needs a recurrent head with {self.dataset.n_genes} outputs")

    def prediction_graph(self, leaves, items, training):
        mode = self.trunk_mode if training else "eval"
        cell: RecurrentCell = self.model.head
        state = cell.initial_state(len(items))
        s, t0 = self.windows.series[items], self.windows.starts[items]
        current = self._first(items)
        outputs: List[Tensor] = []
        for step in range(self.horizon):
            trace = self.model.forward_graph(leaves, current, mode=mode)
            predicted, state = cell(leaves, flatten_embeddings(trace.final), state)
            outputs.append(reshape(predicted, (len(items), 1, self.dataset.n_genes)))
            # teacher forcing while training, own prediction otherwise
            current = self.inputs[s, t0 + step + 1] if training else predicted
        return concat(outputs, axis=1)


def persistence_mse(dataset: SeriesDataset, series_indices: Sequence[int], horizon: int) -> float:
    """MSE of repeating the last observed vector over the horizon."""
    check_horizon(dataset, horizon)
    windows = Windows.of(series_indices, dataset.n_steps, horizon)
    offsets = windows.starts[:, None] + np.arange(1, horizon + 1)[None, :]
    target = dataset.values[windows.series[:, None], offsets]
    mask = dataset.mask[windows.series[:, None], offsets]
    last = dataset.values[windows.series, windows.starts][:, None, :]
    return masked_mse(np.broadcast_to(last, target.shape), target, mask)


@dataclass
class ForecastResult:
    model: BFRegModel
    fit: FitResult
    metrics: Dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def losses(self):
        return self.fit.losses


FORECASTERS = {"simultaneous": SimultaneousForecastTask, "recurrent": RecurrentForecastTask}


def _train(kind: str, model, dataset, horizon, config, generator, split, tracker,
           trunk_mode=None) -> ForecastResult:
    task = FORECASTERS[kind](model, dataset, horizon, config, generator, tracker, trunk_mode)
    if split is None:
        fit = task.fit(np.arange(len(task.windows)))
        metrics = {f"train_{k}": v for k, v in task.evaluate(np.arange(dataset.n_series)).items()}
    else:
        fit = task.fit(task.window_items(split.train), task.window_items(split.validation))
        metrics = {f"train_{k}": v for k, v in task.evaluate(split.train).items()}
        metrics.update({f"test_{k}": v for k, v in task.evaluate(split.test).items()})
        metrics["test_persistence_mse"] = persistence_mse(task.dataset, split.test, horizon)
    fit.metrics = metrics
    return ForecastResult(model, fit, metrics)


def train_forecast_simultaneous(model: BFRegModel, dataset: SeriesDataset, horizon: int,
                                config: TrainConfig, generator: np.random.Generator,
                                split: Optional[Split] = None,
                                tracker: Optional[RunTracker] = None,
                                trunk_mode: Optional[str] = None) -> ForecastResult:
    """Split indices refer to series."""
    return _train("simultaneous", model, dataset, horizon, config, generator, split, tracker, trunk_mode)


def train_forecast_recurrent(model: BFRegModel, dataset: SeriesDataset, horizon: int,
                             config: TrainConfig, generator: np.random.Generator,
                             split: Optional[Split] = None,
                             tracker: Optional[RunTracker] = None,
                             trunk_mode: Optional[str] = None) -> ForecastResult:
    return _train("recurrent", model, dataset, horizon, config, generator, split, tracker, trunk_mode)
