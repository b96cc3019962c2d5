"""
Knowledge Completion
====================

Remove every edge of one node, retrain the enhanced model several times on
the ablated knowledge, and rank the missing pairs by learned edge intensity.
An edge's frequency is the share of runs that put it in their top-k list;
recall is the share of removed edges found among the k most frequent
candidates.

Runs are independent and may train on worker threads; results are always
assembled in run order.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import RunTracker, resolve_tracker
from .data import ExpressionDataset, SeriesDataset
from .errors import ConfigError, DiscoveryError, TrainingDivergedError
from .knowledge import KnowledgeBase, remove_node_edges
from .model import BFRegModel, HeadSpec, ModelConfig
from .numerics import make_generator, split_generator
from .semconv import SpanKinds
from .tasks import TrainConfig, train_forecast_simultaneous, train_imputation

Edge = Tuple[str, str]
DISCOVERY_TASKS = ("impute", "forecast")


@dataclass(frozen=True)
class EdgeCandidate:
    level: str
    source: str
    target: str
    intensity: float
    rank: int

    @property
    def edge(self) -> Edge:
        return (self.source, self.target)


def mean_intensity(model: BFRegModel, inputs: np.ndarray, level: str) -> np.ndarray:
    """Edge intensities averaged over samples and hops; ``[target][source]``."""
    if model.config.variant != "enhanced":
        raise DiscoveryError(f"edge ranking needs the enhanced variant, model is '{model.config.variant}'")
    trace = model.forward(inputs, mode="eval")
    if level not in trace.levels or not trace.levels[level].intensities:
        raise DiscoveryError(f"model computes no edge intensities at level '{level}'")
    stacked = np.stack([omega.numpy().reshape((-1,) + omega.shape[-2:]).mean(axis=0)
                        for omega in trace.levels[level].intensities])
    return stacked.mean(axis=0)


def rank_candidates(omega: np.ndarray, adjacency: np.ndarray, names: Sequence[str], level: str,
                    restrict_to: Optional[str] = None) -> List[EdgeCandidate]:
    """
    Non-existing, non-self pairs sorted by intensity (high first), then by
    (source, target) name.
    """
    adjacency = np.asarray(adjacency)
    if restrict_to is not None and restrict_to not in names:
        raise DiscoveryError(f"unknown node '{restrict_to}' at level '{level}'")
    rows = []
    for i, target in enumerate(names):
        for j, source in enumerate(names):
            if i == j or adjacency[i, j]:
                continue
            if restrict_to is not None and restrict_to not in (source, target):
                continue
            rows.append((-float(omega[i, j]), source, target))
    rows.sort()
    return [EdgeCandidate(level, s, t, -neg, rank) for rank, (neg, s, t) in enumerate(rows)]


def rank_edges(model: BFRegModel, level: str, inputs, restrict_to: Optional[str] = None) -> List[EdgeCandidate]:
    """Rank the missing edges of ``level`` in ``model``'s knowledge by mean intensity on ``inputs``."""
    omega = mean_intensity(model, np.asarray(inputs, dtype=np.float64), level)
    return rank_candidates(omega, model.kb.adjacency[level], model.kb.nodes[level], level, restrict_to)


def edge_frequency(top_k_lists: Sequence[Sequence[Edge]]) -> Dict[Edge, float]:
    """Share of runs whose list holds each edge; edges never listed are absent."""
    if not top_k_lists:
        raise DiscoveryError("edge frequency needs at least one run")
    counts: Dict[Edge, int] = {}
    for listed in top_k_lists:
        for edge in set(map(tuple, listed)):
            counts[edge] = counts.get(edge, 0) + 1
    return {edge: c / len(top_k_lists) for edge, c in counts.items()}


def recall_at_k(removed: Sequence[Edge], top_k: Sequence[Edge]) -> float:
    removed = set(map(tuple, removed))
    if not removed:
        raise DiscoveryError("recall is undefined for an empty removed set")
    return len(removed & set(map(tuple, top_k))) / len(removed)


@dataclass
class DiscoveryConfig:
    runs: int = 10
    k: int = 20
    level: Optional[str] = None
    restrict_to_node: bool = True
    task: str = "impute"
    horizon: int = 1
    workers: int = 1
    model: ModelConfig = field(default_factory=lambda: ModelConfig(variant="enhanced"))
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError(f"discovery needs at least one run, got {self.runs}")
        if self.k < 1:
            raise ConfigError(f"k must be positive, got {self.k}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        if self.task not in DISCOVERY_TASKS:
            raise ConfigError(f"discovery task must be one of {DISCOVERY_TASKS}, got {self.task!r}")
        if self.model.variant != "enhanced":
            raise ConfigError("discovery trains the enhanced variant")


@dataclass
class DiscoveryRun:
    index: int
    ranking: List[EdgeCandidate] = field(default_factory=list)
    top_k: List[Edge] = field(default_factory=list)
    recall: Optional[float] = None
    error: Optional[str] = None

    @property
    def succeeded(self) -> bool:
        return self.error is None


@dataclass
class DiscoveryReport:
    level: str
    node: str
    k: int
    removed: List[Edge]
    runs: List[DiscoveryRun]
    frequency: Dict[Edge, float]
    mean_intensity: Dict[Edge, float]
    candidate_count: int
    recall: float

    @property
    def successful_runs(self) -> int:
        return sum(r.succeeded for r in self.runs)

    @property
    def run_recalls(self) -> List[float]:
        return [r.recall for r in self.runs if r.recall is not None]

    @property
    def mean_recall(self) -> float:
        return float(np.mean(self.run_recalls))

    @property
    def random_expectation(self) -> float:
        """Expected recall of a uniformly random ranking of the same candidates."""
        return min(1.0, self.k / self.candidate_count) if self.candidate_count else 0.0

    def frequency_ranked(self) -> List[Edge]:
        return [(s, t) for s, t, _, _ in self.frequency_table()]

    def frequency_table(self) -> List[Tuple[str, str, float, float]]:
        """(source, target, frequency, mean intensity) of every listed edge, most frequent first."""
        rows = [(s, t, f, self.mean_intensity.get((s, t), 0.0)) for (s, t), f in self.frequency.items()]
        rows.sort(key=lambda r: (-r[2], -r[3], r[0], r[1]))
        return rows

    def to_dict(self) -> Dict:
        return {
            "level": self.level,
            "node": self.node,
            "k": self.k,
            "runs": len(self.runs),
            "successful_runs": self.successful_runs,
            "removed": [list(e) for e in self.removed],
            "candidate_count": self.candidate_count,
            "recall": self.recall,
            "mean_run_recall": self.mean_recall,
            "random_expectation": self.random_expectation,
            "top_k": [list(e) for e in self.frequency_ranked()[:self.k]],
        }


def _training_inputs(dataset: Union[ExpressionDataset, SeriesDataset], genes: Sequence[str]) -> np.ndarray:
    aligned = dataset.align(genes)
    observed = aligned.values * aligned.mask
    return observed.reshape(-1, observed.shape[-1])


def _head_for(config: DiscoveryConfig, n_genes: int) -> HeadSpec:
    size = n_genes * (config.horizon if config.task == "forecast" else 1)
    return HeadSpec(size, config.model.head.hidden)


def _train_one(index: int, kb: KnowledgeBase, dataset, config: DiscoveryConfig, level: str,
               node: str, inputs: np.ndarray, generator: np.random.Generator,
               tracker: RunTracker) -> DiscoveryRun:
    run = DiscoveryRun(index)
    model_config = replace(config.model, head=_head_for(config, kb.count(kb.levels[0])))
    try:
        with tracker.track(f"discovery.run{index}", kind=SpanKinds.DISCOVERY_RUN, epoch=index) as span:
            model = BFRegModel(model_config, kb, generator)
            if config.task == "forecast":
                train_forecast_simultaneous(model, dataset, config.horizon, config.train, generator,
                                            tracker=tracker)
            else:
                train_imputation(model, dataset, config.train, generator, tracker=tracker)
            restrict = node if config.restrict_to_node else None
            run.ranking = rank_edges(model, level, inputs, restrict)
            run.top_k = [c.edge for c in run.ranking[:config.k]]
            span.metrics["candidates"] = len(run.ranking)
    except TrainingDivergedError as e:
        logging.warning(f"BFReg: discovery run {index} diverged: {e}")
        run.error = str(e)
    return run


def run_discovery(kb: KnowledgeBase, dataset: Union[ExpressionDataset, SeriesDataset], node: str,
                  config: Optional[DiscoveryConfig] = None,
                  generator: Optional[np.random.Generator] = None,
                  tracker: Optional[RunTracker] = None) -> DiscoveryReport:
    """Ablate ``node``, train ``config.runs`` models and aggregate their rankings."""
    config = config or DiscoveryConfig()
    level = config.level or kb.levels[0]
    removed = list(kb.node_edges(level, node))
    if not removed:
        raise DiscoveryError(f"node '{node}' has no edges at level '{level}'")
    ablated = remove_node_edges(kb, level, node)
    inputs = _training_inputs(dataset, ablated.nodes[ablated.levels[0]])
    generators = split_generator(generator if generator is not None else make_generator(0), config.runs)
    tracker = resolve_tracker(tracker, task="discover")
    logging.info(f"BFReg: discovery for '{node}' ({len(removed)} removed edges, {config.runs} runs)")

    def job(i):
        return _train_one(i, ablated, dataset, config, level, node, inputs, generators[i], tracker)

    if config.workers == 1:
        runs = [job(i) for i in range(config.runs)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            runs = list(pool.map(job, range(config.runs)))

    done = [r for r in runs if r.succeeded]
    if not done:
        raise DiscoveryError(f"every discovery run diverged for node '{node}'")
    for r in done:
        r.recall = recall_at_k(removed, r.top_k)
    frequency = edge_frequency([r.top_k for r in runs])
    intensity: Dict[Edge, List[float]] = {}
    for r in done:
        for c in r.ranking:
            intensity.setdefault(c.edge, []).append(c.intensity)
    report = DiscoveryReport(
        level=level, node=node, k=config.k, removed=removed, runs=runs, frequency=frequency,
        mean_intensity={e: float(np.mean(v)) for e, v in intensity.items()},
        candidate_count=len(done[0].ranking), recall=0.0)
    report.recall = recall_at_k(removed, report.frequency_ranked()[:config.k])
    logging.info(f"BFReg: discovery recall {report.recall:.3f} "
                 f"(random {report.random_expectation:.3f}) over {len(done)} runs")
    return report
