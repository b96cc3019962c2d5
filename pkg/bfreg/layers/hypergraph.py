"""Hypergraph propagation over pathway incidence."""

from typing import Callable, Dict, Union

import numpy as np

from ..errors import KnowledgeError
from ..numerics import Tensor, TensorLike, get_activation, lift, matmul
from ..semconv import ParamNames
from .base import BaseLayer

Activation = Union[str, Callable[[Tensor], Tensor]]


def hypergraph_operator(R: np.ndarray) -> np.ndarray:
    """
    ``D^-1 R B^-1 R^T`` with D the node degrees and B the hyperedge sizes.
    Rows of nodes in no hyperedge are identity rows, so those nodes pass
    their own transform through.
    """
    R = np.asarray(R, dtype=np.float64)
    sizes = R.sum(axis=0)
    if np.any(sizes == 0):
        raise KnowledgeError(f"hyperedge {int(np.flatnonzero(sizes == 0)[0])} has no members")
    degrees = R.sum(axis=1)
    P = (R / sizes) @ R.T
    linked = degrees > 0
    P[linked] /= degrees[linked, None]
    P[~linked] = np.eye(R.shape[0])[~linked]
    return P


def hypergraph_propagate(H: TensorLike, R: np.ndarray, W: TensorLike,
                         activation: Activation = "identity") -> Tensor:
    act = get_activation(activation) if isinstance(activation, str) else activation
    return act(matmul(matmul(hypergraph_operator(R), lift(H)), W))


class HypergraphLayer(BaseLayer):
    def __init__(self, level: str, hop: int, d: int, R: np.ndarray, activation: str = "tanh"):
        super().__init__(f"{level}.hyper.hop{hop}")
        self.level = level
        self.hop = hop
        self.d = d
        self.activation = activation
        self.operator = hypergraph_operator(R)

    def param_shapes(self):
        return {ParamNames.hypergraph(self.level, self.hop): ((self.d, self.d), self.d)}

    def __call__(self, leaves: Dict[str, Tensor], H: TensorLike) -> Tensor:
        W = leaves[ParamNames.hypergraph(self.level, self.hop)]
        return get_activation(self.activation)(matmul(matmul(self.operator, lift(H)), W))
