"""
Attention-based intra-level propagation (single head, additive logits).

For node i the neighbourhood is its in-neighbours plus i itself. Logits are
``leaky_relu(a1 . W_q h_i + a2 . W_k h_j)``, normalised over the
neighbourhood, and the aggregate ``s_i = sum_j alpha_ij W_v h_j`` is merged
with ``h_i`` by sum or by a learned projection of the concatenation.
"""

from typing import Dict, Optional

import numpy as np

from ..errors import ConfigError
from ..numerics import (
    Tensor, TensorLike, concat, leaky_relu, lift, masked_softmax, matmul, take, transpose,
)
from ..semconv import ParamNames
from .base import BaseLayer

UPDATE_MODES = ("sum", "concat")


def neighbourhood_mask(A: np.ndarray) -> np.ndarray:
    """In-neighbours plus self."""
    A = np.asarray(A, dtype=np.float64)
    return ((A + np.eye(A.shape[0])) > 0).astype(np.float64)


def gat_propagate(H: TensorLike, A: np.ndarray, query: TensorLike, key: TensorLike,
                  value: TensorLike, attention: TensorLike, update_mode: str = "sum",
                  update: Optional[TensorLike] = None) -> Tensor:
    if update_mode not in UPDATE_MODES:
        raise ConfigError(f"update_mode must be one of {UPDATE_MODES}, got {update_mode!r}")
    H = lift(H)
    attention = lift(attention)
    d = H.shape[-1]
    a_query = take(attention, np.arange(d), axis=0)
    a_key = take(attention, np.arange(d, 2 * d), axis=0)
    left = matmul(matmul(H, query), a_query)
    right = matmul(matmul(H, key), a_key)
    logits = leaky_relu(left + transpose(right))
    weights = masked_softmax(logits, neighbourhood_mask(A))
    messages = matmul(weights, matmul(H, value))
    if update_mode == "sum":
        return messages + H
    if update is None:
        raise ConfigError("concat update mode needs an update projection")
    return matmul(concat([messages, H], axis=-1), update)


class GATLayer(BaseLayer):
    """One hop of attention propagation on one level."""

    def __init__(self, level: str, hop: int, d: int, update_mode: str = "sum"):
        super().__init__(f"{level}.hop{hop}")
        if update_mode not in UPDATE_MODES:
            raise ConfigError(f"update_mode must be one of {UPDATE_MODES}, got {update_mode!r}")
        self.level = level
        self.hop = hop
        self.d = d
        self.update_mode = update_mode

    def _pname(self, part):
        return ParamNames.attention(self.level, self.hop, part)

    def param_shapes(self):
        d = self.d
        shapes = {
            self._pname("query"): ((d, d), d),
            self._pname("key"): ((d, d), d),
            self._pname("value"): ((d, d), d),
            self._pname("attention"): ((2 * d, 1), 2 * d),
        }
        if self.update_mode == "concat":
            shapes[self._pname("update")] = ((2 * d, d), 2 * d)
        return shapes

    def __call__(self, leaves: Dict[str, Tensor], H: TensorLike, A: np.ndarray) -> Tensor:
        update = leaves[self._pname("update")] if self.update_mode == "concat" else None
        return gat_propagate(H, A, leaves[self._pname("query")], leaves[self._pname("key")],
                             leaves[self._pname("value")], leaves[self._pname("attention")],
                             self.update_mode, update)
