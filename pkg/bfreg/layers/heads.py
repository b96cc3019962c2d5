"""
Task heads on top of the final-level embeddings.

``MLPHead`` flattens the embeddings row-major and applies a perceptron with
tanh hidden layers and a linear output. ``RecurrentCell`` is the gated
(input/forget/output, tanh candidate) cell used by the recurrent forecaster.
"""

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from ..errors import ShapeError
from ..numerics import Tensor, TensorLike, lift, matmul, reshape, sigmoid, take, tanh
from ..semconv import ParamNames
from .base import BaseLayer


def flatten_embeddings(H: TensorLike) -> Tensor:
    """(..., n, d) -> (batch, n*d); an unbatched (n, d) becomes one row."""
    H = lift(H)
    if H.ndim == 2:
        return reshape(H, (1, H.shape[0] * H.shape[1]))
    batch = int(np.prod(H.shape[:-2]))
    return reshape(H, (batch, H.shape[-2] * H.shape[-1]))


def mlp(z: TensorLike, layers: Sequence[Tuple[TensorLike, TensorLike]]) -> Tensor:
    """tanh between affine layers, linear output."""
    out = lift(z)
    for position, (weight, bias) in enumerate(layers):
        out = matmul(out, weight) + bias
        if position < len(layers) - 1:
            out = tanh(out)
    return out


class MLPHead(BaseLayer):
    def __init__(self, input_size: int, hidden: Sequence[int], output_size: int):
        super().__init__("head")
        if output_size < 1:
            raise ShapeError(f"head output size must be positive, got {output_size}")
        self.sizes = [input_size, *hidden, output_size]

    def param_shapes(self):
        shapes = {}
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes, self.sizes[1:])):
            shapes[ParamNames.head_layer(i, "weight")] = ((fan_in, fan_out), fan_in)
            shapes[ParamNames.head_layer(i, "bias")] = ((1, fan_out), fan_in)
        return shapes

    @property
    def output_size(self) -> int:
        return self.sizes[-1]

    def __call__(self, leaves: Dict[str, Tensor], H: TensorLike) -> Tensor:
        layers = [(leaves[ParamNames.head_layer(i, "weight")], leaves[ParamNames.head_layer(i, "bias")])
                  for i in range(len(self.sizes) - 1)]
        return mlp(flatten_embeddings(H), layers)


@dataclass
class CellState:
    hidden: Tensor
    memory: Tensor


class RecurrentCell(BaseLayer):
    """
    Gated recurrent cell with a linear read-out to the next expression vector.

    Gates ``[i, f, o, g] = z W_x + h W_h + b``; ``c' = f c + i g`` and
    ``h' = o tanh(c')`` with sigmoid i, f, o and tanh g.
    """

    def __init__(self, input_size: int, hidden_size: int, output_size: int):
        super().__init__("head.cell")
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.output_size = output_size

    def param_shapes(self):
        z, h, n = self.input_size, self.hidden_size, self.output_size
        return {
            ParamNames.head_cell("input"): ((z, 4 * h), z),
            ParamNames.head_cell("recurrent"): ((h, 4 * h), h),
            ParamNames.head_cell("bias"): ((1, 4 * h), h),
            ParamNames.head_cell("readout"): ((h, n), h),
            ParamNames.head_cell("readout_bias"): ((1, n), h),
        }

    def initial_state(self, batch: int) -> CellState:
        zeros = np.zeros((batch, self.hidden_size))
        return CellState(Tensor(zeros), Tensor(zeros))

    def step(self, leaves: Dict[str, Tensor], z: TensorLike, state: CellState) -> CellState:
        h = self.hidden_size
        gates = (matmul(lift(z), leaves[ParamNames.head_cell("input")])
                 + matmul(state.hidden, leaves[ParamNames.head_cell("recurrent")])
                 + leaves[ParamNames.head_cell("bias")])

        def gate(k):
            return take(gates, np.arange(k * h, (k + 1) * h), axis=-1)

        memory = sigmoid(gate(1)) * state.memory + sigmoid(gate(0)) * tanh(gate(3))
        hidden = sigmoid(gate(2)) * tanh(memory)
        return CellState(hidden, memory)

    def readout(self, leaves: Dict[str, Tensor], state: CellState) -> Tensor:
        return (matmul(state.hidden, leaves[ParamNames.head_cell("readout")])
                + leaves[ParamNames.head_cell("readout_bias")])

    def __call__(self, leaves: Dict[str, Tensor], z: TensorLike, state: CellState):
        new_state = self.step(leaves, z, state)
        return self.readout(leaves, new_state), new_state
