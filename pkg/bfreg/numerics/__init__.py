"""
Numeric core: differentiable tensors, parameters, Adam, batch norm, RNG.
"""

from .batchnorm import BN_EPSILON, BN_MOMENTUM, BatchNormState, batch_norm
from .gradcheck import (
    GradientCheckReport,
    ParameterCheck,
    evaluate,
    evaluate_with_gradients,
    finite_difference_check,
    relative_error,
)
from .optim import AdamState, adam_step
from .params import Parameter, ParamStore
from .rng import make_generator, split_generator, uniform_init
from .tensor import (
    ACTIVATIONS,
    SUPPORTED_PRIMITIVES,
    Tensor,
    TensorLike,
    add,
    apply,
    apply_mask,
    backward,
    concat,
    div,
    get_activation,
    identity,
    leaky_relu,
    lift,
    log_softmax,
    masked_softmax,
    matmul,
    mul,
    neg,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid,
    sqrt,
    square,
    sub,
    take,
    tanh,
    transpose,
)

__all__ = [
    "ACTIVATIONS", "SUPPORTED_PRIMITIVES", "Tensor", "TensorLike", "add", "apply", "apply_mask",
    "backward", "concat", "div", "get_activation", "identity", "leaky_relu", "lift",
    "log_softmax", "masked_softmax", "matmul", "mul", "neg", "reduce_mean", "reduce_sum",
    "reshape", "sigmoid", "sqrt", "square", "sub", "take", "tanh", "transpose",
    "Parameter", "ParamStore", "AdamState", "adam_step",
    "BN_EPSILON", "BN_MOMENTUM", "BatchNormState", "batch_norm",
    "GradientCheckReport", "ParameterCheck", "evaluate", "evaluate_with_gradients",
    "finite_difference_check", "relative_error",
    "make_generator", "split_generator", "uniform_init",
]
