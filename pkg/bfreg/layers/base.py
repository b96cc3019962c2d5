"""
Base Layer for BFReg
====================

Every architectural operator comes twice: a pure function over Tensors (the
operator itself, usable with hand-set weights) and a ``Layer`` subclass that
owns the operator's parameter names, declares them in a ParamStore and feeds
the matching leaves to the function.

Layers keep no numeric state of their own; all weights live in the store.
"""

from abc import ABC, abstractmethod
from typing import Dict, Tuple

import numpy as np

from ..numerics import ParamStore, Tensor, uniform_init


class BaseLayer(ABC):
    """
    Abstract base class for parameterised operators.

    Subclasses list their parameters in ``param_shapes`` and implement
    ``__call__`` over the leaves produced from a ParamStore.
    """

    def __init__(self, name: str):
        self.name = name

    @abstractmethod
    def param_shapes(self) -> Dict[str, Tuple[Tuple[int, ...], int]]:
        """Map parameter name -> (shape, fan_in)."""

    @abstractmethod
    def __call__(self, leaves: Dict[str, Tensor], *args, **kwargs) -> Tensor:
        """Apply the operator."""

    def declare(self, store: ParamStore, generator: np.random.Generator):
        for pname, (shape, fan_in) in self.param_shapes().items():
            store.add(pname, self.initial_value(pname, shape, fan_in, generator))

    def initial_value(self, pname: str, shape, fan_in: int,
                      generator: np.random.Generator) -> np.ndarray:
        return uniform_init(generator, shape, fan_in)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"
