"""Evaluation metrics: macro AUC, Pearson correlation, masked MSE."""

from typing import Optional, Sequence

import numpy as np
from scipy.stats import pearsonr
from sklearn.metrics import roc_auc_score

from ..errors import DatasetError


def macro_auc(scores, labels) -> float:
    """
    Unweighted mean of one-vs-rest AUCs, one per score column. Ties count
    one half. Every class must occur in ``labels`` and at least two classes
    are needed.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise DatasetError(f"scores {scores.shape} do not match {labels.shape[0]} labels")
    n_classes = scores.shape[1]
    if n_classes < 2:
        raise DatasetError("macro AUC needs at least two classes")
    present = np.bincount(labels, minlength=n_classes)
    if present.size > n_classes:
        raise DatasetError(f"label {present.size - 1} has no score column")
    absent = np.flatnonzero(present == 0)
    if absent.size:
        raise DatasetError(f"class {int(absent[0])} is absent from the labels; macro AUC undefined")
    per_class = [roc_auc_score(labels == c, scores[:, c]) for c in range(n_classes)]
    return float(np.mean(per_class))


def pcc(predicted, target) -> float:
    """Pearson correlation over flattened entries; both must vary."""
    a = np.asarray(predicted, dtype=np.float64).ravel()
    b = np.asarray(target, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DatasetError(f"pcc needs equal sizes, got {a.size} and {b.size}")
    if a.size < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DatasetError("pcc is undefined for zero-variance input")
    return float(pearsonr(a, b)[0])


def mean_series_pcc(predicted: Sequence[np.ndarray], target: Sequence[np.ndarray]) -> Optional[float]:
    """PCC per series, averaged over series where it is defined."""
    values = []
    for p, t in zip(predicted, target):
        try:
            values.append(pcc(p, t))
        except DatasetError:
            continue
    return float(np.mean(values)) if values else None


def masked_mse(predicted, target, mask=None) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.ones_like(target) if mask is None else np.asarray(mask, dtype=np.float64)
    total = mask.sum()
    if total == 0:
        raise DatasetError("no entries selected for MSE")
    return float((mask * (predicted - target) ** 2).sum() / total)
