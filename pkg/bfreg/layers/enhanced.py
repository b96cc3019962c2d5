"""
Learnable adjacency for the enhanced model.

An edge scorer turns every ordered pair of embeddings into an intensity in
(0, 1). Known edges keep their intensity, absent pairs are damped by alpha,
self pairs are dropped (the propagation adds the self term itself), and the
result drives ``activation((A' + I) H W)``.
"""

from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from ..errors import ConfigError
from ..numerics import (
    Tensor, TensorLike, get_activation, lift, matmul, reshape, sigmoid, tanh, take,
)
from ..semconv import ParamNames
from .base import BaseLayer

Activation = Union[str, Callable[[Tensor], Tensor]]


def edge_intensity(H: TensorLike, w1: TensorLike, b1: TensorLike,
                   w2: TensorLike, b2: TensorLike,
                   pair_logits: Optional[TensorLike] = None) -> Tensor:
    """
    ``Omega[i][j] = sigmoid(w2^T tanh(w1^T [h_i || h_j] + b1) + b2 + P[i][j])``
    for all ordered pairs; shape ``(..., n, n)``.

    Embeddings carry expression values only, so ``P`` (one learned logit per
    ordered pair, omitted means zero) is what lets intensities tell two
    pairs with the same values apart.
    """
    H = lift(H)
    w1 = lift(w1)
    n, d = H.shape[-2], H.shape[-1]
    batch = H.shape[:-2]
    target_part = matmul(H, take(w1, np.arange(d), axis=0))
    source_part = matmul(H, take(w1, np.arange(d, 2 * d), axis=0))
    hidden_width = w1.shape[-1]
    rows = reshape(target_part, batch + (n, 1, hidden_width))
    cols = reshape(source_part, batch + (1, n, hidden_width))
    hidden = tanh(rows + cols + b1)
    scores = reshape(matmul(hidden, w2) + b2, batch + (n, n))
    if pair_logits is not None:
        scores = scores + pair_logits
    return sigmoid(scores)


def reweighting(A: np.ndarray, alpha: float) -> np.ndarray:
    """Constant factor of ``A'``: 1 on edges, alpha elsewhere, 0 on the diagonal."""
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must satisfy 0 <= alpha < 1, got {alpha}")
    A = np.asarray(A, dtype=np.float64)
    factor = A + alpha * (1.0 - A)
    np.fill_diagonal(factor, 0.0)
    return factor


def enhanced_adjacency(A: np.ndarray, omega: TensorLike, alpha: float) -> Tensor:
    return lift(omega) * reweighting(A, alpha)


def enhanced_propagate(H: TensorLike, A_prime: TensorLike, W: TensorLike,
                       activation: Activation = "identity") -> Tensor:
    act = get_activation(activation) if isinstance(activation, str) else activation
    A_prime = lift(A_prime)
    n = A_prime.shape[-1]
    return act(matmul(matmul(A_prime + np.eye(n), H), W))


class EdgeScorer(BaseLayer):
    """
    Two-stage perceptron 2d -> d -> 1 shared by all pairs of one level. With
    ``nodes`` set it also learns an ``nodes x nodes`` pair logit, starting
    at 0.
    """

    def __init__(self, level: str, d: int, nodes: Optional[int] = None):
        super().__init__(f"{level}.scorer")
        self.level = level
        self.d = d
        self.nodes = nodes

    def param_shapes(self):
        d = self.d
        shapes = {
            ParamNames.scorer(self.level, "w1"): ((2 * d, d), 2 * d),
            ParamNames.scorer(self.level, "b1"): ((1, d), 2 * d),
            ParamNames.scorer(self.level, "w2"): ((d, 1), d),
            ParamNames.scorer(self.level, "b2"): ((1, 1), d),
        }
        if self.nodes is not None:
            shapes[ParamNames.scorer(self.level, "pair")] = ((self.nodes, self.nodes), self.nodes)
        return shapes

    def initial_value(self, pname, shape, fan_in, generator):
        if pname == ParamNames.scorer(self.level, "pair"):
            return np.zeros(shape)
        return super().initial_value(pname, shape, fan_in, generator)

    def __call__(self, leaves: Dict[str, Tensor], H: TensorLike) -> Tensor:
        pair = leaves.get(ParamNames.scorer(self.level, "pair")) if self.nodes is not None else None
        return edge_intensity(H, *(leaves[ParamNames.scorer(self.level, p)]
                                   for p in ("w1", "b1", "w2", "b2")), pair_logits=pair)


class EnhancedLayer(BaseLayer):
    """
    One hop of enhanced propagation. Intensities are recomputed from the
    hop's input embeddings by the level's shared scorer.
    """

    def __init__(self, level: str, hop: int, d: int, alpha: float,
                 scorer: EdgeScorer, activation: str = "tanh"):
        super().__init__(f"{level}.hop{hop}")
        self.level = level
        self.hop = hop
        self.d = d
        self.alpha = alpha
        self.scorer = scorer
        self.activation = activation
        reweighting(np.zeros((1, 1)), alpha)

    def param_shapes(self):
        return {ParamNames.hop_weight(self.level, self.hop): ((self.d, self.d), self.d)}

    def __call__(self, leaves: Dict[str, Tensor], H: TensorLike,
                 A: np.ndarray) -> Tuple[Tensor, Tensor]:
        """Returns the propagated embeddings and the intensities used."""
        omega = self.scorer(leaves, H)
        A_prime = enhanced_adjacency(A, omega, self.alpha)
        out = enhanced_propagate(H, A_prime, leaves[ParamNames.hop_weight(self.level, self.hop)],
                                 self.activation)
        return out, omega
