"""Exact 1-Wasserstein distance between equal-size sample sets."""

from typing import Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ..errors import DatasetError
from ..numerics import Tensor, lift, make_generator, reduce_mean, reduce_sum, sqrt, square, take

# keeps the matched-distance gradient finite when two samples coincide
DISTANCE_FLOOR = 1e-12


def as_samples(P) -> np.ndarray:
    """(samples, dim); a flat vector is read as 1-D samples."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    if P.ndim != 2:
        raise DatasetError(f"sample set must be samples x dimensions, got shape {P.shape}")
    if P.shape[0] == 0:
        raise DatasetError("sample set is empty")
    return P


def equal_size_indices(n_p: int, n_q: int, generator: Optional[np.random.Generator] = None
                       ) -> Tuple[np.ndarray, np.ndarray]:
    """Row indices that subsample the larger set, without replacement, to the smaller size."""
    if n_p == n_q:
        return np.arange(n_p), np.arange(n_q)
    generator = generator if generator is not None else make_generator(0)
    size = min(n_p, n_q)
    if n_p > n_q:
        return np.sort(generator.choice(n_p, size, replace=False)), np.arange(n_q)
    return np.arange(n_p), np.sort(generator.choice(n_q, size, replace=False))


def optimal_matching(P: np.ndarray, Q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows, matched columns and Euclidean cost matrix of the optimal assignment."""
    cost = cdist(P, Q)
    rows, cols = linear_sum_assignment(cost)
    return rows, cols, cost


def wasserstein_distance(P, Q, generator: Optional[np.random.Generator] = None) -> float:
    """Mean Euclidean cost of the optimal one-to-one matching of ``P`` and ``Q``."""
    P, Q = as_samples(P), as_samples(Q)
    if P.shape[1] != Q.shape[1]:
        raise DatasetError(f"sample dimensions differ: {P.shape[1]} and {Q.shape[1]}")
    ip, iq = equal_size_indices(P.shape[0], Q.shape[0], generator)
    P, Q = P[ip], Q[iq]
    rows, cols, cost = optimal_matching(P, Q)
    return float(cost[rows, cols].mean())


def wasserstein_loss(predicted: Tensor, target, generator: Optional[np.random.Generator] = None) -> Tensor:
    """
    Differentiable distance for training: the matching is found on the
    current values and held fixed, the matched distances stay in the graph.
    """
    predicted = lift(predicted)
    target = as_samples(target)
    ip, iq = equal_size_indices(predicted.shape[0], target.shape[0], generator)
    chosen = take(predicted, ip, axis=0)
    target = target[iq]
    rows, cols, _ = optimal_matching(chosen.data, target)
    diff = take(chosen, rows, axis=0) - target[cols]
    distances = sqrt(reduce_sum(square(diff), axis=-1) + DISTANCE_FLOOR)
    return reduce_mean(distances)
