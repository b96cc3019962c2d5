"""Seedable, splittable random streams and parameter initialisation."""

from typing import List, Optional, Tuple

import numpy as np


def make_generator(seed: Optional[int] = None) -> np.random.Generator:
    return np.random.default_rng(seed)


def split_generator(generator: np.random.Generator, count: int) -> List[np.random.Generator]:
    """Independent child streams; the parent advances but stays usable."""
    return generator.spawn(count)


def uniform_init(generator: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return generator.uniform(-bound, bound, size=shape)
