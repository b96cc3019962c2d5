"""Masked dense transition between adjacent levels."""

from typing import Callable, Dict, Union

import numpy as np

from ..numerics import Tensor, TensorLike, apply_mask, get_activation, matmul
from ..semconv import ParamNames
from .base import BaseLayer

Activation = Union[str, Callable[[Tensor], Tensor]]


def masked_dense(H: TensorLike, M: np.ndarray, W: TensorLike, b: TensorLike,
                 activation: Activation = "identity") -> Tensor:
    """
    ``activation((M * W) H + b 1^T)``. Entries of W where M is 0 never reach
    the output. ``b`` has one entry per upper node, shape (n_upper, 1).
    """
    act = get_activation(activation) if isinstance(activation, str) else activation
    return act(matmul(apply_mask(W, M), H) + b)


class MaskedDenseLayer(BaseLayer):
    def __init__(self, lower: str, upper: str, M: np.ndarray, activation: str = "tanh"):
        super().__init__(f"{lower}.to.{upper}")
        self.lower = lower
        self.upper = upper
        self.M = np.asarray(M, dtype=np.float64)
        self.activation = activation

    def param_shapes(self):
        n_upper, n_lower = self.M.shape
        fan_in = max(int(self.M.sum(axis=1).max()), 1)
        return {
            ParamNames.transition(self.lower, self.upper, "weight"): ((n_upper, n_lower), fan_in),
            ParamNames.transition(self.lower, self.upper, "bias"): ((n_upper, 1), fan_in),
        }

    def __call__(self, leaves: Dict[str, Tensor], H: TensorLike) -> Tensor:
        return masked_dense(H, self.M,
                            leaves[ParamNames.transition(self.lower, self.upper, "weight")],
                            leaves[ParamNames.transition(self.lower, self.upper, "bias")],
                            self.activation)
