"""
Differentiable Tensors for BFReg
================================

Dense double-precision arrays with reverse-mode gradients over a closed set
of primitives. A computation is plain Python that combines ``Tensor`` values
with the functions below; calling ``backward`` on a scalar result fills
``grad`` on every tensor that requires it.

Tensors may carry leading batch axes. Matrix-shaped primitives act on the
trailing two axes and broadcast over the rest.

Anything not listed in ``SUPPORTED_PRIMITIVES`` is refused by ``apply`` with
``UnsupportedPrimitiveError``; there is no silent fallback.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, logsumexp

from ..errors import GradientError, NonFiniteError, ShapeError, UnsupportedPrimitiveError

LEAKY_SLOPE = 0.2


def _as_array(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    return arr


def _check_finite(arr: np.ndarray, op: str):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by '{op}'")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape)
                 if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """
    A node in a differentiable computation.

    Leaves are created directly; every other tensor is produced by a
    primitive and remembers its parents and a backward rule. Constants
    (``requires_grad=False`` with no trainable ancestors) keep no graph.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = _as_array(data)
        _check_finite(arr, name or "leaf")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Tuple["Tensor", ...], backward, op: str) -> "Tensor":
        _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.op = op
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


TensorLike = Union[Tensor, np.ndarray, float, int, Sequence]


def lift(value: TensorLike) -> Tensor:
    """Wrap a constant as a Tensor; Tensors pass through."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"'{op}' cannot broadcast shapes {a.shape} and {b.shape}") from None


# --- Elementwise arithmetic ---

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = lift(a), lift(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = lift(a), lift(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = lift(a), lift(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = lift(a), lift(b)
    _broadcast_shape(a, b, "div")
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    return Tensor._from_op(data, (a, b), backward, "div")


def neg(a: TensorLike) -> Tensor:
    a = lift(a)
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def square(a: TensorLike) -> Tensor:
    a = lift(a)
    return Tensor._from_op(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def sqrt(a: TensorLike) -> Tensor:
    a = lift(a)
    if np.any(a.data < 0):
        raise NonFiniteError("'sqrt' of a negative value")
    y = np.sqrt(a.data)

    def backward(g):
        with np.errstate(divide="ignore"):
            return (g / (2.0 * y),)
    return Tensor._from_op(y, (a,), backward, "sqrt")


def apply_mask(a: TensorLike, mask) -> Tensor:
    """Elementwise product with a constant binary mask."""
    a = lift(a)
    m = np.asarray(mask, dtype=np.float64)
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ShapeError("mask entries must be 0 or 1")
    try:
        data = a.data * m
    except ValueError:
        raise ShapeError(f"'mask' cannot broadcast shapes {a.shape} and {m.shape}") from None
    return Tensor._from_op(data, (a,), lambda g: (_unbroadcast(g * m, a.shape),), "mask")


# --- Matrix structure ---

def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = lift(a), lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"'matmul' needs operands of rank >= 2, got {a.shape} and {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"'matmul' shape mismatch: {a.shape} @ {b.shape}") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return Tensor._from_op(data, (a, b), backward, "matmul")


def transpose(a: TensorLike) -> Tensor:
    a = lift(a)
    if a.ndim < 2:
        raise ShapeError(f"'transpose' needs rank >= 2, got {a.shape}")
    return Tensor._from_op(np.swapaxes(a.data, -1, -2).copy(), (a,),
                           lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def reshape(a: TensorLike, shape: Tuple[int, ...]) -> Tensor:
    a = lift(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"'reshape' cannot turn {a.shape} into {shape}") from None
    return Tensor._from_op(data.copy(), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def concat(tensors: Sequence[TensorLike], axis: int = -1) -> Tensor:
    parts = tuple(lift(t) for t in tensors)
    if not parts:
        raise ShapeError("'concat' needs at least one operand")
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        shapes = [p.shape for p in parts]
        raise ShapeError(f"'concat' shape mismatch along axis {axis}: {shapes}") from None
    cuts = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))
    return Tensor._from_op(data, parts, backward, "concat")


def take(a: TensorLike, indices, axis: int = 0) -> Tensor:
    """Select entries along one axis; repeated indices accumulate gradient."""
    a = lift(a)
    idx = np.asarray(indices, dtype=np.intp)
    try:
        data = np.take(a.data, idx, axis=axis)
    except IndexError as exc:
        raise ShapeError(f"'take' index out of range for shape {a.shape}: {exc}") from None

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(np.moveaxis(full, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (full,)
    return Tensor._from_op(data, (a,), backward, "take")


# --- Nonlinearities ---

def identity(a: TensorLike) -> Tensor:
    return lift(a)


def sigmoid(a: TensorLike) -> Tensor:
    a = lift(a)
    y = expit(a.data)
    return Tensor._from_op(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(a: TensorLike) -> Tensor:
    a = lift(a)
    y = np.tanh(a.data)
    return Tensor._from_op(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def leaky_relu(a: TensorLike, slope: float = LEAKY_SLOPE) -> Tensor:
    a = lift(a)
    positive = a.data > 0
    data = np.where(positive, a.data, slope * a.data)
    return Tensor._from_op(data, (a,), lambda g: (np.where(positive, g, slope * g),), "leaky_relu")


def masked_softmax(logits: TensorLike, mask, axis: int = -1) -> Tensor:
    """
    Softmax over the entries of each row admitted by ``mask``.

    Entries outside the mask get probability exactly 0 and no gradient.
    Every row must admit at least one entry.
    """
    logits = lift(logits)
    try:
        admitted = np.broadcast_to(np.asarray(mask) > 0, logits.shape)
    except ValueError:
        raise ShapeError(f"'masked_softmax' mask does not fit logits {logits.shape}") from None
    if not np.all(admitted.any(axis=axis)):
        raise ShapeError("'masked_softmax' found a row with no admitted entries")
    shifted = np.where(admitted, logits.data, -np.inf)
    top = shifted.max(axis=axis, keepdims=True)
    e = np.where(admitted, np.exp(np.where(admitted, logits.data - top, 0.0)), 0.0)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)
    return Tensor._from_op(y, (logits,), backward, "masked_softmax")


def log_softmax(a: TensorLike, axis: int = -1) -> Tensor:
    a = lift(a)
    y = a.data - logsumexp(a.data, axis=axis, keepdims=True)

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)
    return Tensor._from_op(y, (a,), backward, "log_softmax")


# --- Reductions ---

def reduce_sum(a: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    a = lift(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    if axis is None and not keepdims:
        data = np.asarray(data).reshape(1, 1)

    def backward(g):
        if axis is None:
            return (np.full(a.shape, g.reshape(-1)[0]),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return Tensor._from_op(np.asarray(data, dtype=np.float64), (a,), backward, "sum")


def reduce_mean(a: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    a = lift(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# --- Gradient propagation ---

def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Tensor, seed: Optional[np.ndarray] = None) -> None:
    """
    Propagate gradients from ``root`` to every ancestor that requires them.

    Without ``seed`` the root must hold a single value (the loss). With a
    seed of the root's shape this computes a vector-Jacobian product.
    Intermediate gradients are released once propagated; leaves keep theirs.
    """
    if seed is None:
        if root.size != 1:
            raise GradientError(f"gradient root must be a scalar, got shape {root.shape}")
        seed = np.ones_like(root.data)
    else:
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != root.shape:
            raise ShapeError(f"seed shape {seed.shape} does not match root {root.shape}")
    if not root.requires_grad:
        return
    order = _topological_order(root)
    for node in order:
        node.grad = None
    root.grad = seed.copy()
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        parent_grads = node._backward(node.grad)
        for parent, g in zip(node._parents, parent_grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64)
            else:
                parent.grad = parent.grad + g
        node.grad = None


# --- Registries ---

SUPPORTED_PRIMITIVES: Dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "square": square,
    "sqrt": sqrt,
    "mask": apply_mask,
    "matmul": matmul,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "take": take,
    "identity": identity,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "leaky_relu": leaky_relu,
    "masked_softmax": masked_softmax,
    "log_softmax": log_softmax,
    "sum": reduce_sum,
    "mean": reduce_mean,
}

ACTIVATIONS: Dict[str, Callable[[Tensor], Tensor]] = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "leaky_relu": leaky_relu,
    "identity": identity,
}


def apply(primitive: str, *args, **kwargs) -> Tensor:
    """Invoke a primitive by name; unknown names are a construction error."""
    fn = SUPPORTED_PRIMITIVES.get(primitive)
    if fn is None:
        raise UnsupportedPrimitiveError(
            f"unsupported primitive '{primitive}'; supported: {sorted(SUPPORTED_PRIMITIVES)}")
    return fn(*args, **kwargs)


def get_activation(name: str) -> Callable[[Tensor], Tensor]:
    fn = ACTIVATIONS.get(name)
    if fn is None:
        raise UnsupportedPrimitiveError(
            f"unsupported activation '{name}'; supported: {sorted(ACTIVATIONS)}")
    return fn
