"""Adam optimiser over a ParamStore."""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from ..errors import GradientError, ShapeError
from .params import ParamStore


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, grads: Dict[str, np.ndarray],
              params: ParamStore) -> Tuple[ParamStore, AdamState]:
    """
    One Adam update of every trainable parameter, in place.

    Frozen parameters are left untouched. A trainable parameter without a
    gradient is an error rather than a silent skip.
    """
    trainable = params.trainable_names()
    missing = [name for name in trainable if name not in grads]
    if missing:
        raise GradientError(f"no gradient for trainable parameter(s): {', '.join(missing)}")

    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for name in trainable:
        value = params[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != value.shape:
            raise ShapeError(f"gradient for '{name}' has shape {g.shape}, expected {value.shape}")
        m = state.m.get(name, np.zeros_like(value))
        v = state.v.get(name, np.zeros_like(value))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        params.set(name, value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return params, state
