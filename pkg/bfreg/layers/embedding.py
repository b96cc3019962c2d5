"""Per-gene embedding: one shared two-stage perceptron applied to each scalar."""

from typing import Dict

from ..numerics import Tensor, TensorLike, lift, matmul, reshape, tanh
from ..semconv import ParamNames
from .base import BaseLayer


def embed_genes(x: TensorLike, w1: TensorLike, b1: TensorLike,
                w2: TensorLike, b2: TensorLike) -> Tensor:
    """
    Embed an expression vector (or a batch of them) into ``(..., n, d)``.

    Row i is ``tanh(x_i w1 + b1) w2 + b2``; it depends on ``x_i`` alone, so
    equal expression values give equal rows.
    """
    x = lift(x)
    column = reshape(x, x.shape + (1,))
    hidden = tanh(matmul(column, w1) + b1)
    return matmul(hidden, w2) + b2


class GeneEmbedding(BaseLayer):
    def __init__(self, d: int):
        super().__init__("embed")
        self.d = d

    def param_shapes(self):
        d = self.d
        return {
            ParamNames.EMBED_W1: ((1, d), 1),
            ParamNames.EMBED_B1: ((1, d), 1),
            ParamNames.EMBED_W2: ((d, d), d),
            ParamNames.EMBED_B2: ((1, d), d),
        }

    def __call__(self, leaves: Dict[str, Tensor], x: TensorLike) -> Tensor:
        return embed_genes(x, leaves[ParamNames.EMBED_W1], leaves[ParamNames.EMBED_B1],
                           leaves[ParamNames.EMBED_W2], leaves[ParamNames.EMBED_B2])
