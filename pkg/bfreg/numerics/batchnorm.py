"""Fused batch normalisation over the leading (batch) axis."""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, TensorLike, add, div, lift, mul, sub

BN_MOMENTUM = 0.9
BN_EPSILON = 1e-5


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM

    @classmethod
    def fresh(cls, shape: Tuple[int, ...], momentum: float = BN_MOMENTUM) -> "BatchNormState":
        return cls(np.zeros(shape), np.ones(shape), momentum)

    def update(self, mean: np.ndarray, var: np.ndarray):
        self.running_mean = self.momentum * self.running_mean + (1.0 - self.momentum) * mean
        self.running_var = self.momentum * self.running_var + (1.0 - self.momentum) * var


def batch_norm(H: TensorLike, gamma: TensorLike, beta: TensorLike, mode: str = "train",
               state: Optional[BatchNormState] = None, eps: float = BN_EPSILON) -> Tensor:
    """
    Normalise every non-batch position of ``H`` across the batch, then apply
    the affine ``gamma``/``beta``.

    Train mode uses batch statistics (population variance) and folds them
    into ``state`` when given; it needs at least two samples. Eval mode uses
    the running statistics in ``state``.
    """
    H = lift(H)
    if mode == "train":
        n = H.shape[0]
        if H.ndim < 2 or n < 2:
            raise ShapeError(f"batch_norm in train mode needs at least 2 samples, got shape {H.shape}")
        mean = H.data.mean(axis=0)
        var = H.data.var(axis=0)
        std = np.sqrt(var + eps)
        with np.errstate(divide="ignore", invalid="ignore"):
            xhat = (H.data - mean) / std
        if state is not None:
            state.update(mean, var)

        def backward(g):
            return ((n * g - g.sum(axis=0) - xhat * (g * xhat).sum(axis=0)) / (n * std),)
        normalised = Tensor._from_op(xhat, (H,), backward, "batch_norm")
    elif mode == "eval":
        if state is None:
            raise ShapeError("batch_norm in eval mode needs running statistics")
        normalised = div(sub(H, state.running_mean), np.sqrt(state.running_var + eps))
    else:
        raise ValueError(f"batch_norm mode must be 'train' or 'eval', got {mode!r}")
    return add(mul(normalised, gamma), beta)
