"""
Time-Varying Structured Vector Fields
=====================================

The flow runs in expression space: the state is one scalar per gene and the
field returns one rate per gene. Each interval between two timestamps is cut
into equal sub-intervals, one per piece; sub-intervals are half-open except
the last, which is closed.

A piece's weights are not parameters themselves. A small hypernetwork maps
sinusoidal features of ``t`` to the piece's weight entries, so the weights
change with time:

- ``intra``: ``f = act(A' x W(t) + 1 b(t)) U(t) + c(t)`` where ``A'`` is the
  gene regulatory adjacency with self loops and every gene carries a hidden
  vector of width ``hidden``;
- ``mapped``: ``f = act((S * V(t)) x + c(t))`` where ``S`` links genes that
  share a node of the named upper level.
"""

import math
from abc import abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, IntegrationError, KnowledgeError
from ..knowledge import KnowledgeBase
from ..layers import BaseLayer, neighbourhood_mask
from ..numerics import (
    ParamStore, Tensor, TensorLike, apply_mask, get_activation, lift, make_generator, matmul,
    reshape, take, tanh, transpose,
)
from ..semconv import ParamNames

PIECE_KINDS = ("intra", "mapped")
TIME_FREQUENCIES = (1.0, 2.0, 4.0)
HYPER_HIDDEN = 16


def time_features(t: float, frequencies: Sequence[float] = TIME_FREQUENCIES) -> np.ndarray:
    """Row vector ``[t, sin(f t), cos(f t), ...]``."""
    feats = [t]
    for f in frequencies:
        feats.extend((math.sin(f * t), math.cos(f * t)))
    return np.asarray(feats, dtype=np.float64).reshape(1, -1)


@dataclass(frozen=True)
class PieceSpec:
    kind: str = "intra"
    level: Optional[str] = None

    def __post_init__(self):
        if self.kind not in PIECE_KINDS:
            raise ConfigError(f"piece kind must be one of {PIECE_KINDS}, got {self.kind!r}")
        if self.kind == "mapped" and not self.level:
            raise ConfigError("a mapped piece names the level whose mapping structures it")

    @classmethod
    def parse(cls, text: str) -> "PieceSpec":
        """``"intra"`` or ``"mapped:<level>"``."""
        kind, _, level = text.partition(":")
        return cls(kind, level or None)

    def __str__(self):
        return self.kind if self.level is None else f"{self.kind}:{self.level}"


class FieldPiece(BaseLayer):
    """One piece of the field plus the hypernetwork that produces its weights."""

    def __init__(self, index: int, n: int, activation: str, hyper_hidden: int,
                 frequencies: Sequence[float]):
        super().__init__(f"field.piece{index}")
        self.index = index
        self.n = n
        self.activation = activation
        self.hyper_hidden = hyper_hidden
        self.frequencies = tuple(frequencies)

    @abstractmethod
    def weight_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Generated weights, in output order."""

    @abstractmethod
    def apply(self, weights: Dict[str, Tensor], x: Tensor) -> Tensor:
        """Rates for a (samples, n) state."""

    def layout(self) -> List[Tuple[str, Tuple[int, ...], slice]]:
        out, start = [], 0
        for name, shape in self.weight_shapes().items():
            size = int(np.prod(shape))
            out.append((name, shape, slice(start, start + size)))
            start += size
        return out

    @property
    def output_size(self) -> int:
        return sum(int(np.prod(s)) for s in self.weight_shapes().values())

    def param_shapes(self):
        features = 1 + 2 * len(self.frequencies)
        h = self.hyper_hidden
        return {
            ParamNames.field_piece(self.index, "w1"): ((features, h), features),
            ParamNames.field_piece(self.index, "b1"): ((1, h), features),
            ParamNames.field_piece(self.index, "w2"): ((h, self.output_size), h),
            ParamNames.field_piece(self.index, "b2"): ((1, self.output_size), h),
        }

    def generate(self, leaves: Dict[str, Tensor], t: float) -> Dict[str, Tensor]:
        p = lambda part: leaves[ParamNames.field_piece(self.index, part)]  # noqa: E731
        hidden = tanh(matmul(time_features(t, self.frequencies), p("w1")) + p("b1"))
        flat = matmul(hidden, p("w2")) + p("b2")
        return {name: reshape(take(flat, np.arange(s.start, s.stop), axis=-1), shape)
                for name, shape, s in self.layout()}

    def __call__(self, leaves: Dict[str, Tensor], x: TensorLike, t: float) -> Tensor:
        return self.apply(self.generate(leaves, t), lift(x))


class IntraPiece(FieldPiece):
    def __init__(self, index, adjacency: np.ndarray, hidden: int, activation, hyper_hidden, frequencies):
        self.adjacency = neighbourhood_mask(adjacency)
        self.hidden = hidden
        super().__init__(index, adjacency.shape[0], activation, hyper_hidden, frequencies)

    def weight_shapes(self):
        d, n = self.hidden, self.n
        return {"W": (1, d), "b": (1, d), "U": (d, 1), "c": (1, n)}

    def apply(self, weights, x):
        samples = x.shape[0]
        column = reshape(x, (samples, self.n, 1))
        spread = matmul(matmul(self.adjacency, column), weights["W"]) + weights["b"]
        rates = matmul(get_activation(self.activation)(spread), weights["U"])
        return reshape(rates, (samples, self.n)) + weights["c"]


class MappedPiece(FieldPiece):
    def __init__(self, index, structure: np.ndarray, activation, hyper_hidden, frequencies):
        self.structure = structure
        super().__init__(index, structure.shape[0], activation, hyper_hidden, frequencies)

    def weight_shapes(self):
        return {"V": (self.n, self.n), "c": (1, self.n)}

    def apply(self, weights, x):
        coupling = apply_mask(weights["V"], self.structure)
        return get_activation(self.activation)(matmul(x, transpose(coupling)) + weights["c"])


def gene_structure(kb: KnowledgeBase, level: str) -> np.ndarray:
    """Binary genes x genes matrix: 1 where two genes share a node of ``level``."""
    gene = kb.levels[0]
    if level == gene:
        raise KnowledgeError("a mapped piece needs a level above the genes")
    if level == kb.hyperedge_level:
        up = kb.incidence_for(gene).T
    else:
        up = kb.mapping_between(gene, level)
    return ((up.T @ up) > 0).astype(np.float64)


class StructuredField:
    """
    Piecewise field over the gene level of ``kb``. Parameters live in
    ``self.params``; ``evaluate`` takes leaves so the same code serves
    training and inference.
    """

    def __init__(self, kb: KnowledgeBase, pieces: Sequence = ("intra",), hidden: int = 4,
                 activation: str = "tanh", hyper_hidden: int = HYPER_HIDDEN,
                 frequencies: Sequence[float] = TIME_FREQUENCIES,
                 generator: Optional[np.random.Generator] = None):
        if not pieces:
            raise ConfigError("a field needs at least one piece")
        get_activation(activation)
        self.kb = kb
        self.specs = [p if isinstance(p, PieceSpec) else PieceSpec.parse(str(p)) for p in pieces]
        self.n = kb.count(kb.levels[0])
        self.params = ParamStore()
        self.pieces: List[FieldPiece] = []
        generator = generator if generator is not None else make_generator(0)
        adjacency = np.asarray(kb.adjacency[kb.levels[0]])
        for i, spec in enumerate(self.specs):
            if spec.kind == "intra":
                piece = IntraPiece(i, adjacency, hidden, activation, hyper_hidden, frequencies)
            else:
                piece = MappedPiece(i, gene_structure(kb, spec.level), activation, hyper_hidden, frequencies)
            piece.declare(self.params, generator)
            self.pieces.append(piece)

    def piece_index(self, t: float, interval: Tuple[float, float]) -> int:
        start, end = interval
        span = end - start
        tolerance = 1e-9 * max(abs(span), 1.0)
        if span <= 0:
            raise IntegrationError(f"empty interval [{start}, {end}]")
        if t < start - tolerance or t > end + tolerance:
            raise IntegrationError(f"t={t} lies outside [{start}, {end}]")
        position = int(math.floor((t - start) / span * len(self.pieces)))
        return min(max(position, 0), len(self.pieces) - 1)

    def evaluate(self, leaves: Dict[str, Tensor], x: TensorLike, t: float,
                 interval: Tuple[float, float]) -> Tensor:
        x = lift(x)
        if x.shape[-1] != self.n:
            raise ConfigError(f"state has {x.shape[-1]} genes, field expects {self.n}")
        return self.pieces[self.piece_index(t, interval)](leaves, x, t)

    def bind(self, interval: Tuple[float, float],
             leaves: Optional[Dict[str, Tensor]] = None) -> Callable[[Tensor, float], Tensor]:
        """The field on ``interval`` as ``f(x, t)``; constants unless ``leaves`` are given."""
        leaves = leaves if leaves is not None else self.params.constants()
        start, end = sorted(interval)
        return lambda x, t: self.evaluate(leaves, x, t, (start, end))

    def zero_params(self) -> Dict[str, np.ndarray]:
        """Values giving the identically zero field (with a zero-preserving activation)."""
        return {name: np.zeros_like(value) for name, value in self.params.snapshot().items()}

    def set_constant(self, index: int, **weights):
        """Make piece ``index`` produce fixed weights at every t; unnamed weights are 0."""
        piece = self.pieces[index]
        packed = np.zeros((1, piece.output_size))
        known = {name: (shape, s) for name, shape, s in piece.layout()}
        for name, value in weights.items():
            if name not in known:
                raise ConfigError(f"piece {index} has no weight '{name}'; known: {sorted(known)}")
            shape, s = known[name]
            packed[0, s] = np.broadcast_to(np.asarray(value, dtype=np.float64), shape).ravel()
        w2 = ParamNames.field_piece(index, "w2")
        self.params.set(w2, np.zeros_like(self.params[w2]))
        self.params.set(ParamNames.field_piece(index, "b2"), packed)

    def describe(self) -> List[str]:
        return [str(s) for s in self.specs]
