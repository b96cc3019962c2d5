"""
Evaluation entry points and finite-difference gradient checking.

A computation is any callable ``computation(leaves, *inputs) -> Tensor``
where ``leaves`` maps parameter names to Tensors built from a ParamStore.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np

from ..errors import GradientError
from .params import ParamStore
from .tensor import Tensor, backward, lift

Computation = Callable[..., Tensor]


def evaluate(computation: Computation, params: ParamStore, *inputs) -> np.ndarray:
    """Value of a computation with every parameter treated as a constant."""
    out = computation(params.constants(), *[lift(x) for x in inputs])
    return out.data.copy()


def evaluate_with_gradients(computation: Computation, params: ParamStore,
                            *inputs) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    Scalar value of a computation and its gradient for every trainable
    parameter. Parameters that do not influence the value get zeros.
    """
    leaves = params.leaves()
    out = computation(leaves, *[lift(x) for x in inputs])
    if out.size != 1:
        raise GradientError(f"computation must return a scalar, got shape {out.shape}")
    backward(out)
    grads = {}
    for name, leaf in leaves.items():
        if not params.is_trainable(name):
            continue
        grads[name] = leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data)
    return out.data.copy(), grads


@dataclass
class ParameterCheck:
    name: str
    max_rel_error: float
    max_abs_error: float
    passed: bool


@dataclass
class GradientCheckReport:
    step: float
    tolerance: float
    checks: Dict[str, ParameterCheck] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.checks.values()), default=0.0)

    def failures(self):
        return [c for c in self.checks.values() if not c.passed]


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.abs(analytic)
    n = np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, n), 1.0)


def finite_difference_check(computation: Computation, params: ParamStore, *inputs,
                            step: float = 1e-5, tolerance: float = 1e-5) -> GradientCheckReport:
    """
    Compare analytic gradients with central differences for every entry of
    every trainable parameter. The caller's store is not modified.
    """
    if step <= 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")
    work = params.copy()
    _, analytic = evaluate_with_gradients(computation, work, *inputs)
    report = GradientCheckReport(step=step, tolerance=tolerance)

    def scalar_at(name, flat_index, delta):
        value = work[name].copy()
        original = value.reshape(-1)[flat_index]
        value.reshape(-1)[flat_index] = original + delta
        work.set(name, value)
        result = evaluate(computation, work, *inputs).reshape(-1)[0]
        value.reshape(-1)[flat_index] = original
        work.set(name, value)
        return result

    for name in work.trainable_names():
        numeric = np.zeros(work[name].size)
        for k in range(numeric.size):
            numeric[k] = (scalar_at(name, k, step) - scalar_at(name, k, -step)) / (2.0 * step)
        numeric = numeric.reshape(work[name].shape)
        rel = relative_error(analytic[name], numeric)
        max_rel = float(rel.max()) if rel.size else 0.0
        max_abs = float(np.abs(analytic[name] - numeric).max()) if rel.size else 0.0
        report.checks[name] = ParameterCheck(name, max_rel, max_abs, max_rel <= tolerance)
    return report
