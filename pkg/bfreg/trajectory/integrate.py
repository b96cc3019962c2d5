"""
Fixed-step fourth-order Runge-Kutta integration and exact log-density
bookkeeping.

Integration is written in Tensor operations, so gradients with respect to
the field's parameters flow through every step. Integrating from ``t_a`` to
``t_b < t_a`` runs the flow backwards.
"""

import logging
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from ..errors import ConfigError, IntegrationError, NonFiniteError
from ..numerics import Tensor, TensorLike, backward, lift
from .fields import StructuredField

DEFAULT_STEPS = 40

VectorField = Callable[[Tensor, float], TensorLike]
FieldLike = Union[StructuredField, VectorField]


def as_vector_field(field: FieldLike, t_a: float, t_b: float,
                    leaves: Optional[Dict[str, Tensor]] = None) -> VectorField:
    if isinstance(field, StructuredField):
        return field.bind((t_a, t_b), leaves)
    if leaves is not None:
        raise ConfigError("leaves only apply to a StructuredField")
    return field


def _check_steps(steps: int):
    if steps < 1:
        raise ConfigError(f"integration needs at least one step, got {steps}")


def rk4_step(f: VectorField, x: Tensor, t: float, h: float) -> Tensor:
    k1 = lift(f(x, t))
    k2 = lift(f(x + k1 * (h / 2), t + h / 2))
    k3 = lift(f(x + k2 * (h / 2), t + h / 2))
    k4 = lift(f(x + k3 * h, t + h))
    return x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6)


def integrate_ode(x0: TensorLike, t_a: float, t_b: float, field: FieldLike,
                  steps: int = DEFAULT_STEPS,
                  leaves: Optional[Dict[str, Tensor]] = None) -> Tensor:
    """State at ``t_b`` starting from ``x0`` at ``t_a``."""
    _check_steps(steps)
    f = as_vector_field(field, t_a, t_b, leaves)
    x = lift(x0)
    if t_a == t_b:
        return x
    h = (t_b - t_a) / steps
    for k in range(steps):
        t = t_a + k * h
        try:
            x = rk4_step(f, x, t, h)
        except NonFiniteError as e:
            logging.error(f"BFReg: integration blew up at step {k} (t={t:.6g})")
            raise IntegrationError(f"non-finite state at step {k} (t={t:.6g}): {e}") from e
    return x


def jacobian_trace(f: VectorField, x: np.ndarray, t: float) -> np.ndarray:
    """
    Exact trace of df/dx for every sample row of ``x`` (samples, n), from one
    vector-Jacobian product per state coordinate. Rows are independent.
    """
    x = np.asarray(x, dtype=np.float64)
    samples, n = x.shape
    trace = np.zeros(samples)
    for j in range(n):
        leaf = Tensor(x, requires_grad=True)
        out = lift(f(leaf, t))
        if out.shape != x.shape:
            raise ConfigError(f"field returned shape {out.shape} for state {x.shape}")
        seed = np.zeros(out.shape)
        seed[:, j] = 1.0
        backward(out, seed)
        if leaf.grad is not None:
            trace += leaf.grad[:, j]
    return trace


def log_density_change(x0, t_a: float, t_b: float, field: FieldLike,
                       steps: int = DEFAULT_STEPS) -> Tuple[np.ndarray, np.ndarray]:
    """
    State at ``t_b`` and ``log p(x(t_b)) - log p(x(t_a))`` per sample,
    integrating ``-Tr(df/dx)`` alongside the state with the same RK4 steps.
    """
    _check_steps(steps)
    f = as_vector_field(field, t_a, t_b)
    x = np.asarray(x0, dtype=np.float64)
    squeeze = x.ndim < 2
    x = np.atleast_2d(x)
    delta = np.zeros(x.shape[0])
    h = (t_b - t_a) / steps if t_a != t_b else 0.0

    def rates(state, t):
        return lift(f(Tensor(state), t)).numpy(), -jacobian_trace(f, state, t)

    for k in range(steps if h else 0):
        t = t_a + k * h
        try:
            k1x, k1l = rates(x, t)
            k2x, k2l = rates(x + k1x * (h / 2), t + h / 2)
            k3x, k3l = rates(x + k2x * (h / 2), t + h / 2)
            k4x, k4l = rates(x + k3x * h, t + h)
        except NonFiniteError as e:
            raise IntegrationError(f"non-finite state at step {k} (t={t:.6g}): {e}") from e
        x = x + (k1x + 2 * k2x + 2 * k3x + k4x) * (h / 6)
        delta = delta + (k1l + 2 * k2l + 2 * k3l + k4l) * (h / 6)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite state at step {k} (t={t:.6g})")
    return (x[0] if squeeze else x), delta
