"""
BFReg Model Assembly
====================

Builds the network from a knowledge base: embed genes, then level by level
propagate inside the level, normalise across the batch, and route to the next
level through the masked mapping. The basic variant propagates with
attention; the enhanced variant with learnable edge intensities.

The model carries no autograd state between calls. ``forward_graph`` takes
the leaves of a computation so the same code path serves training,
evaluation and gradient checks.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, ShapeError
from .knowledge import KnowledgeBase
from .layers import (
    UPDATE_MODES, EdgeScorer, GATLayer, GeneEmbedding, HypergraphLayer, MaskedDenseLayer,
    MLPHead, RecurrentCell, flatten_embeddings, get_intra_layer_class, mlp,
)
from .numerics import (
    BatchNormState, ParamStore, Tensor, TensorLike, batch_norm, concat, get_activation,
    lift, make_generator, reshape,
)
from .semconv import Levels, ParamNames
from .utils import sha256_arrays

HEAD_KINDS = ("mlp", "recurrent")


@dataclass
class HeadSpec:
    """Task head: hidden widths and output size. A recurrent head uses the
    first width as its cell size."""
    output_size: int
    hidden: Tuple[int, ...] = (1024,)
    kind: str = "mlp"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.kind not in HEAD_KINDS:
            raise ConfigError(f"head kind must be one of {HEAD_KINDS}, got {self.kind!r}")
        if self.output_size < 1:
            raise ConfigError(f"head output size must be positive, got {self.output_size}")
        if self.kind == "recurrent" and not self.hidden:
            raise ConfigError("a recurrent head needs a cell width")


@dataclass
class ModelConfig:
    """
    Architecture choices. ``alpha`` is one value for every level or a
    mapping level -> value; ``levels`` None means every knowledge level.
    """
    variant: str = "basic"
    d: int = 4
    hops: int = 1
    alpha: Union[float, Dict[str, float]] = 0.0
    update_mode: str = "sum"
    activation: str = "tanh"
    head: HeadSpec = field(default_factory=lambda: HeadSpec(output_size=1))
    levels: Optional[Tuple[str, ...]] = None
    intra_level: bool = True
    inter_level: bool = True

    def __post_init__(self):
        get_intra_layer_class(self.variant)
        if self.d < 1:
            raise ConfigError(f"embedding size d must be >= 1, got {self.d}")
        if self.hops < 1:
            raise ConfigError(f"hops must be >= 1, got {self.hops}")
        if self.update_mode not in UPDATE_MODES:
            raise ConfigError(f"update_mode must be one of {UPDATE_MODES}, got {self.update_mode!r}")
        get_activation(self.activation)
        if isinstance(self.head, Mapping):
            self.head = HeadSpec(**self.head)
        if self.levels is not None:
            self.levels = tuple(self.levels)
        values = self.alpha.values() if isinstance(self.alpha, Mapping) else [self.alpha]
        for value in values:
            if not 0.0 <= float(value) < 1.0:
                raise ConfigError(f"alpha must satisfy 0 <= alpha < 1, got {value}")

    def alpha_for(self, level: str) -> float:
        if isinstance(self.alpha, Mapping):
            if level not in self.alpha:
                raise ConfigError(f"enhanced model has no alpha for level '{level}'")
            return float(self.alpha[level])
        return float(self.alpha)

    @classmethod
    def perceptron(cls, head: HeadSpec, d: int = 4, first_level: str = Levels.GENE) -> "ModelConfig":
        """Knowledge-free baseline: embedding, batch norm and head only."""
        return cls(variant="basic", d=d, head=head, levels=(first_level,), intra_level=False)

    def to_dict(self) -> Dict:
        doc = asdict(self)
        doc["head"]["hidden"] = list(self.head.hidden)
        doc["levels"] = None if self.levels is None else list(self.levels)
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ModelConfig":
        return cls(**dict(doc))


@dataclass
class LevelStage:
    level: str
    adjacency: np.ndarray
    intra: list = field(default_factory=list)
    hyper: list = field(default_factory=list)
    transition: Optional[MaskedDenseLayer] = None


@dataclass
class LevelTrace:
    level: str
    input: Tensor
    hops: List[Tensor] = field(default_factory=list)
    intensities: List[Tensor] = field(default_factory=list)
    hyper: List[Tensor] = field(default_factory=list)
    normalised: Optional[Tensor] = None
    output: Optional[Tensor] = None


@dataclass
class ForwardTrace:
    """Final embeddings plus every per-level intermediate."""
    final: Tensor
    embedding: Tensor
    levels: Dict[str, LevelTrace]


class BFRegModel:
    """
    A knowledge-structured network. Parameter names and shapes depend only
    on (config, knowledge base); values come from ``generator``.
    """

    def __init__(self, config: ModelConfig, kb: KnowledgeBase,
                 generator: Optional[np.random.Generator] = None):
        self.config = config
        self.source_kb = kb
        selected = kb.select_levels(config.levels or kb.levels)
        self.gene_count = kb.count(kb.levels[0])
        self.merged = not config.inter_level
        self.kb = selected.merged() if self.merged else selected
        self.params = ParamStore()
        self.bn_states: Dict[str, BatchNormState] = {}
        self.stages: List[LevelStage] = []
        self._build(generator if generator is not None else make_generator(0))
        logging.debug(f"BFReg: built {config.variant} model over levels {list(self.kb.levels)} "
                      f"with {self.params.count()} parameters")

    # --- construction ---

    def _build(self, generator: np.random.Generator):
        cfg = self.config
        d = cfg.d
        self.embedding = GeneEmbedding(d)
        self.embedding.declare(self.params, generator)
        layer_class = get_intra_layer_class(cfg.variant)
        for level in self.kb.levels:
            stage = LevelStage(level, np.asarray(self.kb.adjacency[level]))
            upper = self.kb.next_level(level)
            if cfg.intra_level and level != self.kb.hyperedge_level:
                scorer = None
                if layer_class is not GATLayer:
                    scorer = EdgeScorer(level, d, self.kb.count(level))
                    scorer.declare(self.params, generator)
                for hop in range(cfg.hops):
                    if scorer is None:
                        layer = GATLayer(level, hop, d, cfg.update_mode)
                    else:
                        alpha = cfg.alpha_for(self.source_kb.levels[0] if self.merged else level)
                        layer = layer_class(level, hop, d, alpha, scorer, cfg.activation)
                    layer.declare(self.params, generator)
                    stage.intra.append(layer)
                if upper is not None and upper == self.kb.hyperedge_level:
                    for hop in range(cfg.hops):
                        layer = HypergraphLayer(level, hop, d, self.kb.incidence, cfg.activation)
                        layer.declare(self.params, generator)
                        stage.hyper.append(layer)
            n = self.kb.count(level)
            self.params.add(ParamNames.batch_norm(level, "gamma"), np.ones((n, d)))
            self.params.add(ParamNames.batch_norm(level, "beta"), np.zeros((n, d)))
            self.bn_states[level] = BatchNormState.fresh((n, d))
            if upper is not None:
                stage.transition = MaskedDenseLayer(level, upper, self.kb.mappings[level], cfg.activation)
                stage.transition.declare(self.params, generator)
            self.stages.append(stage)
        self.head = self._make_head(cfg.head)
        self.head.declare(self.params, generator)

    def _make_head(self, spec: HeadSpec):
        input_size = self.kb.count(self.kb.levels[-1]) * self.config.d
        if spec.kind == "recurrent":
            return RecurrentCell(input_size, spec.hidden[0], spec.output_size)
        return MLPHead(input_size, spec.hidden, spec.output_size)

    def replace_head(self, spec: HeadSpec, generator: Optional[np.random.Generator] = None):
        """Drop the current head parameters and declare a fresh head."""
        for name in self.head_names():
            self.params.remove(name)
        self.config.head = spec
        self.head = self._make_head(spec)
        self.head.declare(self.params, generator if generator is not None else make_generator(0))

    # --- forward ---

    def _as_batch(self, x: TensorLike) -> Tensor:
        x = lift(x)
        if x.ndim == 1:
            x = reshape(x, (1, x.shape[0]))
        if x.shape[-1] != self.gene_count:
            raise ShapeError(f"expression vectors have {x.shape[-1]} genes, model expects {self.gene_count}")
        return x

    def forward_graph(self, leaves: Dict[str, Tensor], x: TensorLike, mode: str = "train") -> ForwardTrace:
        x = self._as_batch(x)
        H = self.embedding(leaves, x)
        embedding = H
        if self.merged:
            rest = self.kb.count(self.kb.levels[0]) - self.gene_count
            if rest:
                H = concat([H, np.zeros(H.shape[:-2] + (rest, self.config.d))], axis=-2)
        traces = {}
        for stage in self.stages:
            trace = LevelTrace(stage.level, H)
            for layer in stage.intra:
                if isinstance(layer, GATLayer):
                    H = layer(leaves, H, stage.adjacency)
                else:
                    H, omega = layer(leaves, H, stage.adjacency)
                    trace.intensities.append(omega)
                trace.hops.append(H)
            for layer in stage.hyper:
                H = layer(leaves, H)
                trace.hyper.append(H)
            H = batch_norm(H, leaves[ParamNames.batch_norm(stage.level, "gamma")],
                           leaves[ParamNames.batch_norm(stage.level, "beta")],
                           mode=mode, state=self.bn_states[stage.level])
            trace.normalised = H
            if stage.transition is not None:
                H = stage.transition(leaves, H)
                trace.output = H
            traces[stage.level] = trace
        return ForwardTrace(final=H, embedding=embedding, levels=traces)

    def forward(self, x: TensorLike, mode: str = "eval") -> ForwardTrace:
        """Forward pass with every parameter held constant."""
        return self.forward_graph(self.params.constants(), x, mode=mode)

    def head_graph(self, leaves: Dict[str, Tensor], final: Tensor) -> Tensor:
        if isinstance(self.head, RecurrentCell):
            raise ConfigError("a recurrent head is stepped by the forecasting harness")
        return self.head(leaves, final)

    def predict(self, x: TensorLike) -> np.ndarray:
        """Head output in eval mode."""
        leaves = self.params.constants()
        return self.head_graph(leaves, self.forward_graph(leaves, x, mode="eval").final).numpy()

    # --- parameter groups ---

    def head_names(self) -> List[str]:
        return [n for n in self.params.names() if ParamNames.is_head(n)]

    def trunk_names(self) -> List[str]:
        return [n for n in self.params.names() if not ParamNames.is_head(n)]

    def freeze_trunk(self):
        self.params.freeze(self.trunk_names())

    def unfreeze_trunk(self):
        self.params.unfreeze(self.trunk_names())

    def trunk_hash(self) -> str:
        return sha256_arrays({n: self.params[n] for n in self.trunk_names()})

    def inventory(self) -> List[Tuple[str, Tuple[int, ...]]]:
        return [(name, shape) for name, shape, _ in self.params.inventory()]

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Parameter values plus batch-norm running statistics."""
        snap = self.params.snapshot()
        for level, state in self.bn_states.items():
            snap[f"__bn__.{level}.mean"] = state.running_mean.copy()
            snap[f"__bn__.{level}.var"] = state.running_var.copy()
        return snap

    def restore(self, snapshot: Dict[str, np.ndarray]):
        params = {k: v for k, v in snapshot.items() if not k.startswith("__bn__.")}
        self.params.restore(params)
        for level, state in self.bn_states.items():
            mean = snapshot.get(f"__bn__.{level}.mean")
            var = snapshot.get(f"__bn__.{level}.var")
            if mean is not None and var is not None:
                state.running_mean = np.array(mean)
                state.running_var = np.array(var)


def predict_scalar_head(H: TensorLike, layers: Sequence[Tuple[TensorLike, TensorLike]]) -> Tensor:
    """Flatten the final embeddings row-major and apply the head perceptron."""
    return mlp(flatten_embeddings(H), layers)


def predict_vector_head(H: TensorLike, layers: Sequence[Tuple[TensorLike, TensorLike]],
                        n: int, horizon: Optional[int] = None) -> Tensor:
    """As ``predict_scalar_head`` with the output read as ``(batch, n)`` or
    ``(batch, horizon, n)``."""
    out = predict_scalar_head(H, layers)
    expected = n * (horizon or 1)
    if out.shape[-1] != expected:
        raise ShapeError(f"head produces {out.shape[-1]} values, expected {expected}")
    if horizon is None:
        return out
    return reshape(out, (out.shape[0], horizon, n))
