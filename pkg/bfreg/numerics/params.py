"""Named parameter store with trainable/frozen flags."""

from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from ..errors import ParameterError, ShapeError
from .tensor import Tensor


@dataclass
class Parameter:
    value: np.ndarray
    trainable: bool = True


class ParamStore:
    """
    Ordered mapping from parameter name to array.

    Names are unique. ``leaves()`` hands out fresh copies wrapped as Tensors, so
    a computation can never write back into the store; only ``set`` does.
    """

    def __init__(self):
        self._entries: Dict[str, Parameter] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> np.ndarray:
        if name in self._entries:
            raise ParameterError(f"parameter '{name}' already exists")
        arr = np.array(value, dtype=np.float64)
        self._entries[name] = Parameter(arr, trainable)
        return arr

    def remove(self, name: str):
        if self._entries.pop(name, None) is None:
            raise ParameterError(f"unknown parameter '{name}'")

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._entries[name].value
        except KeyError:
            raise ParameterError(f"unknown parameter '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def set(self, name: str, value: np.ndarray):
        current = self[name]
        arr = np.array(value, dtype=np.float64)
        if arr.shape != current.shape:
            raise ShapeError(f"parameter '{name}' has shape {current.shape}, got {arr.shape}")
        self._entries[name].value = arr

    def is_trainable(self, name: str) -> bool:
        if name not in self._entries:
            raise ParameterError(f"unknown parameter '{name}'")
        return self._entries[name].trainable

    def freeze(self, names: Optional[Iterable[str]] = None, prefix: Optional[str] = None):
        for name in self._select(names, prefix):
            self._entries[name].trainable = False

    def unfreeze(self, names: Optional[Iterable[str]] = None, prefix: Optional[str] = None):
        for name in self._select(names, prefix):
            self._entries[name].trainable = True

    def _select(self, names, prefix) -> List[str]:
        if names is None and prefix is None:
            return list(self._entries)
        chosen = list(names or [])
        for name in chosen:
            if name not in self._entries:
                raise ParameterError(f"unknown parameter '{name}'")
        if prefix is not None:
            chosen.extend(n for n in self._entries if n.startswith(prefix))
        return chosen

    def names(self) -> List[str]:
        return list(self._entries)

    def trainable_names(self) -> List[str]:
        return [n for n, p in self._entries.items() if p.trainable]

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name, entry in self._entries.items():
            yield name, entry.value

    def leaves(self) -> Dict[str, Tensor]:
        return {name: Tensor(entry.value, requires_grad=entry.trainable, name=name)
                for name, entry in self._entries.items()}

    def constants(self) -> Dict[str, Tensor]:
        return {name: Tensor(entry.value, name=name) for name, entry in self._entries.items()}

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: entry.value.copy() for name, entry in self._entries.items()}

    def restore(self, snapshot: Dict[str, np.ndarray]):
        for name, value in snapshot.items():
            self.set(name, value)

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for name, entry in self._entries.items():
            other.add(name, entry.value, entry.trainable)
        return other

    def inventory(self) -> List[Tuple[str, Tuple[int, ...], bool]]:
        return [(n, p.value.shape, p.trainable) for n, p in self._entries.items()]

    def count(self, trainable_only: bool = False) -> int:
        return int(sum(p.value.size for p in self._entries.values()
                       if p.trainable or not trainable_only))
