"""
Continuous normalizing flow over population snapshots.

Training maps the samples observed at each timestamp backwards onto the
previous timestamp and minimises the Wasserstein distance to the samples
observed there, summed over adjacent pairs, with gradients taken through
the integrator. Simulation pushes a starting population forward.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import RunTracker, resolve_tracker
from ..data import read_timepoints
from ..errors import ConfigError, DatasetError, IntegrationError, NonFiniteError, TrainingDivergedError
from ..knowledge import KnowledgeBase
from ..numerics import AdamState, adam_step, evaluate_with_gradients, make_generator
from ..semconv import SpanKinds
from .fields import HYPER_HIDDEN, StructuredField
from .integrate import DEFAULT_STEPS, integrate_ode
from .transport import wasserstein_distance, wasserstein_loss


@dataclass
class TrajectoryBatch:
    timestamps: np.ndarray
    samples: List[np.ndarray]
    genes: Tuple[str, ...]

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.samples = [np.asarray(s, dtype=np.float64) for s in self.samples]
        self.genes = tuple(self.genes)
        if len(self.samples) != self.timestamps.size:
            raise DatasetError(f"{self.timestamps.size} timestamps but {len(self.samples)} sample sets")
        if np.any(np.diff(self.timestamps) <= 0):
            raise DatasetError("timestamps must be strictly increasing")
        for t, s in zip(self.timestamps, self.samples):
            if s.ndim != 2 or s.shape[1] != len(self.genes) or s.shape[0] == 0:
                raise DatasetError(f"samples at t={t:g} have shape {s.shape}; expected (>0, {len(self.genes)})")
            if not np.all(np.isfinite(s)):
                raise DatasetError(f"samples at t={t:g} are not finite")

    def __len__(self):
        return self.timestamps.size

    def align(self, genes: Sequence[str]) -> "TrajectoryBatch":
        genes = tuple(genes)
        if genes == self.genes:
            return self
        position = {g: i for i, g in enumerate(self.genes)}
        missing = [g for g in genes if g not in position]
        if missing:
            raise DatasetError(f"trajectory lacks gene(s): {', '.join(missing[:5])}")
        cols = [position[g] for g in genes]
        return TrajectoryBatch(self.timestamps, [s[:, cols] for s in self.samples], genes)

    def head(self, count: int) -> "TrajectoryBatch":
        return TrajectoryBatch(self.timestamps[:count], self.samples[:count], self.genes)


def load_trajectory(manifest: Union[str, Path]) -> Tuple[TrajectoryBatch, List[Path]]:
    """Batch from a timepoint manifest, plus every file read. Sample counts may differ."""
    timestamps, frames, paths = read_timepoints(manifest)
    if len(frames) != timestamps.size:
        raise DatasetError(f"{manifest}: trajectory snapshots take no masks")
    genes = tuple(str(c) for c in frames[0].columns)
    try:
        samples = [f.to_numpy(dtype=np.float64) for f in frames]
    except (TypeError, ValueError):
        raise DatasetError(f"{manifest}: non-numeric trajectory values") from None
    return TrajectoryBatch(timestamps, samples, genes), paths


@dataclass
class CNFConfig:
    lr: float = 1e-2
    epochs: int = 200
    steps: int = DEFAULT_STEPS
    pieces: Tuple[str, ...] = ("intra",)
    hidden: int = 4
    hyper_hidden: int = HYPER_HIDDEN
    activation: str = "tanh"
    sample_size: Optional[int] = None
    select_best: bool = True

    def __post_init__(self):
        self.pieces = tuple(str(p) for p in self.pieces)
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.epochs < 0 or self.steps < 1:
            raise ConfigError("epochs must be >= 0 and steps >= 1")
        if self.sample_size is not None and self.sample_size < 1:
            raise ConfigError(f"sample size must be positive, got {self.sample_size}")

    def build_field(self, kb: KnowledgeBase, generator: Optional[np.random.Generator] = None) -> StructuredField:
        return StructuredField(kb, self.pieces, hidden=self.hidden, activation=self.activation,
                               hyper_hidden=self.hyper_hidden, generator=generator)


@dataclass
class CNFResult:
    vector_field: StructuredField
    losses: List[float] = field(default_factory=list)
    interval_losses: List[List[float]] = field(default_factory=list)
    best_epoch: Optional[int] = None
    baseline: Optional[float] = None


def interval_distances(vector_field: StructuredField, batch: TrajectoryBatch, steps: int = DEFAULT_STEPS,
                       generator: Optional[np.random.Generator] = None) -> List[float]:
    """Distance between each backward-mapped snapshot and its predecessor."""
    out = []
    for i in range(1, len(batch)):
        mapped = integrate_ode(batch.samples[i], batch.timestamps[i], batch.timestamps[i - 1],
                               vector_field, steps).numpy()
        out.append(wasserstein_distance(mapped, batch.samples[i - 1], generator))
    return out


def zero_field_baseline(batch: TrajectoryBatch, generator: Optional[np.random.Generator] = None) -> float:
    """Summed distances when nothing moves."""
    return float(sum(wasserstein_distance(batch.samples[i], batch.samples[i - 1], generator)
                     for i in range(1, len(batch))))


def _draw(samples: np.ndarray, size: Optional[int], generator: np.random.Generator) -> np.ndarray:
    if size is None or samples.shape[0] <= size:
        return samples
    return samples[np.sort(generator.choice(samples.shape[0], size, replace=False))]


def train_cnf(batch: TrajectoryBatch, vector_field: StructuredField, config: CNFConfig,
              generator: Optional[np.random.Generator] = None,
              tracker: Optional[RunTracker] = None) -> CNFResult:
    """One Adam step per epoch on the summed interval losses."""
    if len(batch) < 2:
        raise DatasetError(f"trajectory training needs at least 2 timestamps, got {len(batch)}")
    generator = generator if generator is not None else make_generator(0)
    tracker = resolve_tracker(tracker, task="trajectory")
    batch = batch.align(vector_field.kb.nodes[vector_field.kb.levels[0]])
    result = CNFResult(vector_field, baseline=zero_field_baseline(batch, generator))
    state = AdamState(lr=config.lr)
    best, best_loss = vector_field.params.snapshot(), np.inf
    logging.info(f"BFReg: fitting flow over {len(batch)} timestamps for {config.epochs} epochs")

    for epoch in range(config.epochs):
        parts: List[float] = []
        sources = [_draw(s, config.sample_size, generator) for s in batch.samples]

        def loss(leaves):
            total = None
            parts.clear()
            for i in range(1, len(batch)):
                mapped = integrate_ode(sources[i], batch.timestamps[i], batch.timestamps[i - 1],
                                       vector_field, config.steps, leaves=leaves)
                term = wasserstein_loss(mapped, sources[i - 1], generator)
                parts.append(term.item())
                total = term if total is None else total + term
            return total

        with tracker.track("trajectory.epoch", kind=SpanKinds.EPOCH, epoch=epoch) as span:
            try:
                value, grads = evaluate_with_gradients(loss, vector_field.params)
            except (IntegrationError, NonFiniteError) as e:
                raise TrainingDivergedError(f"trajectory training diverged at epoch {epoch}: {e}") from e
            span.loss = float(value.reshape(-1)[0])
            span.metrics["intervals"] = list(parts)
        result.losses.append(span.loss)
        result.interval_losses.append(list(parts))
        if span.loss < best_loss:
            best_loss, result.best_epoch = span.loss, epoch
            best = vector_field.params.snapshot()
        adam_step(state, grads, vector_field.params)
        logging.debug(f"BFReg: trajectory epoch {epoch} loss={span.loss:.6g}")

    if config.epochs and config.select_best:
        vector_field.params.restore(best)
    return result


@dataclass
class SimulationReport:
    timestamps: List[float] = field(default_factory=list)
    predictions: List[np.ndarray] = field(default_factory=list)
    distances: List[Optional[float]] = field(default_factory=list)

    @property
    def mean_distance(self) -> Optional[float]:
        known = [d for d in self.distances if d is not None]
        return float(np.mean(known)) if known else None

    def rows(self) -> List[Dict[str, Optional[float]]]:
        return [{"timestamp": t, "wasserstein": d} for t, d in zip(self.timestamps, self.distances)]


def simulate(vector_field: StructuredField, x0, t0: float, horizon: Sequence[float],
             truth: Optional[Sequence[np.ndarray]] = None, steps: int = DEFAULT_STEPS,
             generator: Optional[np.random.Generator] = None) -> SimulationReport:
    """
    Push the population ``x0`` observed at ``t0`` through every timestamp in
    ``horizon``; with ``truth`` each prediction is scored against the
    matching observed set.
    """
    report = SimulationReport()
    horizon = [float(t) for t in horizon]
    if truth is not None and len(truth) != len(horizon):
        raise DatasetError(f"{len(horizon)} horizon timestamps but {len(truth)} truth sets")
    x, previous = np.atleast_2d(np.asarray(x0, dtype=np.float64)), float(t0)
    for k, t in enumerate(horizon):
        if t <= previous:
            raise DatasetError(f"horizon timestamps must increase past {previous:g}, got {t:g}")
        x = integrate_ode(x, previous, t, vector_field, steps).numpy()
        report.timestamps.append(t)
        report.predictions.append(x)
        report.distances.append(
            wasserstein_distance(x, truth[k], generator) if truth is not None else None)
        previous = t
    return report
