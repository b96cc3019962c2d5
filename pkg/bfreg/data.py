"""
Expression Datasets
===================

Static datasets are a samples x genes matrix with an optional label per
sample and an observation mask; time series add a time axis. Files are CSV
with a header of gene names (plus an optional ``label`` column); a series is
one CSV per timestamp bound together by a JSON manifest.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DatasetError

PathLike = Union[str, Path]
LABEL_COLUMN = "label"
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


def _check_mask(mask: Optional[np.ndarray], shape, what: str) -> np.ndarray:
    if mask is None:
        return np.ones(shape)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != shape:
        raise DatasetError(f"{what} mask has shape {mask.shape}, values have {shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise DatasetError(f"{what} mask must be binary")
    return mask


@dataclass
class ExpressionDataset:
    values: np.ndarray
    genes: Tuple[str, ...]
    labels: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.genes = tuple(self.genes)
        if self.values.ndim != 2:
            raise DatasetError(f"values must be samples x genes, got shape {self.values.shape}")
        if self.values.shape[1] != len(self.genes):
            raise DatasetError(f"{self.values.shape[1]} value columns but {len(self.genes)} gene names")
        if len(set(self.genes)) != len(self.genes):
            raise DatasetError("gene names must be unique")
        if not np.all(np.isfinite(self.values)):
            raise DatasetError("expression values must be finite")
        self.mask = _check_mask(self.mask, self.values.shape, "observation")
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (self.values.shape[0],):
                raise DatasetError(f"expected one label per sample, got shape {labels.shape}")
            if not np.all(labels == np.round(labels)) or np.any(labels < 0):
                raise DatasetError("labels must be non-negative integers")
            self.labels = labels.astype(np.int64)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_genes(self) -> int:
        return self.values.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            raise DatasetError("dataset has no labels")
        return int(self.labels.max()) + 1

    def subset(self, indices: Sequence[int]) -> "ExpressionDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return ExpressionDataset(self.values[idx], self.genes,
                                 None if self.labels is None else self.labels[idx], self.mask[idx])

    def align(self, genes: Sequence[str]) -> "ExpressionDataset":
        """Columns reordered to ``genes``; every name must be present."""
        genes = tuple(genes)
        if genes == self.genes:
            return self
        position = {g: i for i, g in enumerate(self.genes)}
        missing = [g for g in genes if g not in position]
        if missing:
            raise DatasetError(f"dataset lacks gene(s): {', '.join(missing[:5])}")
        cols = [position[g] for g in genes]
        return ExpressionDataset(self.values[:, cols], genes, self.labels, self.mask[:, cols])


@dataclass
class SeriesDataset:
    """``values`` has shape (series, timestamps, genes)."""
    values: np.ndarray
    genes: Tuple[str, ...]
    timestamps: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.genes = tuple(self.genes)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if self.values.ndim != 3:
            raise DatasetError(f"series values must be series x time x genes, got {self.values.shape}")
        if self.values.shape[1] != self.timestamps.size:
            raise DatasetError(f"{self.values.shape[1]} time steps but {self.timestamps.size} timestamps")
        if self.values.shape[2] != len(self.genes):
            raise DatasetError(f"{self.values.shape[2]} value columns but {len(self.genes)} gene names")
        if np.any(np.diff(self.timestamps) <= 0):
            raise DatasetError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise DatasetError("series values must be finite")
        self.mask = _check_mask(self.mask, self.values.shape, "series")

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def n_genes(self) -> int:
        return self.values.shape[2]

    def subset(self, indices: Sequence[int]) -> "SeriesDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return SeriesDataset(self.values[idx], self.genes, self.timestamps, self.mask[idx])

    def align(self, genes: Sequence[str]) -> "SeriesDataset":
        genes = tuple(genes)
        if genes == self.genes:
            return self
        position = {g: i for i, g in enumerate(self.genes)}
        missing = [g for g in genes if g not in position]
        if missing:
            raise DatasetError(f"series lack gene(s): {', '.join(missing[:5])}")
        cols = [position[g] for g in genes]
        return SeriesDataset(self.values[:, :, cols], genes, self.timestamps, self.mask[:, :, cols])


@dataclass
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: Optional[int] = None

    def to_dict(self) -> Dict:
        return {"train": self.train.tolist(), "validation": self.validation.tolist(),
                "test": self.test.tolist(), "seed": self.seed}


def make_split(n: int, generator: np.random.Generator, fractions=SPLIT_FRACTIONS,
               seed: Optional[int] = None) -> Split:
    """Disjoint, covering random split; every part non-empty when n >= 3."""
    if n < 3:
        raise DatasetError(f"need at least 3 samples to split, got {n}")
    order = generator.permutation(n)
    n_train = max(1, int(round(fractions[0] * n)))
    n_val = max(1, int(round(fractions[1] * n)))
    n_train = min(n_train, n - 2)
    n_val = min(n_val, n - n_train - 1)
    return Split(np.sort(order[:n_train]), np.sort(order[n_train:n_train + n_val]),
                 np.sort(order[n_train + n_val:]), seed)


def make_stratified_split(labels, generator: np.random.Generator, fractions=SPLIT_FRACTIONS,
                          seed: Optional[int] = None) -> Split:
    """
    Split each class separately with ``make_split``'s rounding so class
    proportions carry over. Classes with fewer than three samples go to
    training whole.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size < 3:
        raise DatasetError(f"need at least 3 samples to split, got {labels.size}")
    parts = ([], [], [])
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < 3:
            parts[0].append(members)
            continue
        local = make_split(members.size, generator, fractions)
        for part, idx in zip(parts, (local.train, local.validation, local.test)):
            part.append(members[idx])
    train, validation, test = (np.sort(np.concatenate(p)) if p else np.zeros(0, dtype=np.intp)
                               for p in parts)
    if validation.size == 0 or test.size == 0:
        return make_split(labels.size, generator, fractions, seed)
    return Split(train, validation, test, seed)


# --- File I/O ---

def _read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except FileNotFoundError:
        raise DatasetError(f"dataset file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DatasetError(f"{path}: cannot parse CSV: {e}") from None


def _numeric(frame: pd.DataFrame, path: Path) -> np.ndarray:
    try:
        return frame.to_numpy(dtype=np.float64)
    except (TypeError, ValueError):
        bad = [c for c in frame.columns if not pd.api.types.is_numeric_dtype(frame[c])]
        raise DatasetError(f"{path}: non-numeric column(s) {bad}") from None


def load_expression(path: PathLike, mask_path: Optional[PathLike] = None,
                    label_column: str = LABEL_COLUMN) -> ExpressionDataset:
    path = Path(path)
    frame = _read_csv(path)
    labels = None
    if label_column in frame.columns:
        labels = frame.pop(label_column).to_numpy()
    values = _numeric(frame, path)
    mask = None
    if mask_path is not None:
        mask_frame = _read_csv(Path(mask_path))
        if list(mask_frame.columns) != list(frame.columns):
            raise DatasetError(f"{mask_path}: mask header does not match {path}")
        mask = _numeric(mask_frame, Path(mask_path))
    return ExpressionDataset(values, tuple(str(c) for c in frame.columns), labels, mask)


def save_expression(dataset: ExpressionDataset, path: PathLike,
                    mask_path: Optional[PathLike] = None) -> List[Path]:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.values, columns=list(dataset.genes))
    if dataset.labels is not None:
        frame[LABEL_COLUMN] = dataset.labels
    frame.to_csv(path, index=False, float_format="%.17g")
    written = [path]
    if mask_path is not None:
        pd.DataFrame(dataset.mask.astype(np.int64), columns=list(dataset.genes)).to_csv(mask_path, index=False)
        written.append(Path(mask_path))
    return written


def read_timepoints(manifest: PathLike) -> Tuple[np.ndarray, List[pd.DataFrame], List[Path]]:
    """
    Timestamps, one frame per timestamp, and every file read. The manifest is
    ``{"timestamps": [...], "files": [...]}`` with paths relative to it.
    """
    manifest = Path(manifest)
    try:
        doc = json.loads(manifest.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetError(f"series manifest not found: {manifest}") from None
    except json.JSONDecodeError as e:
        raise DatasetError(f"{manifest}: invalid JSON: {e}") from None
    unknown = sorted(set(doc) - {"timestamps", "files", "masks"})
    if unknown:
        raise DatasetError(f"{manifest}: unknown manifest key(s): {', '.join(unknown)}")
    timestamps = np.asarray(doc.get("timestamps", []), dtype=np.float64)
    files = doc.get("files", [])
    if len(files) != timestamps.size or not files:
        raise DatasetError(f"{manifest}: need one file per timestamp")
    paths = [manifest.parent / f for f in files]
    frames = [_read_csv(p) for p in paths]
    for p, frame in zip(paths[1:], frames[1:]):
        if list(frame.columns) != list(frames[0].columns):
            raise DatasetError(f"{p}: header differs from {paths[0]}")
    read = [manifest] + paths
    if doc.get("masks"):
        mask_paths = [manifest.parent / f for f in doc["masks"]]
        frames = frames + [_read_csv(p) for p in mask_paths]
        read += mask_paths
    return timestamps, frames, read


def load_series(manifest: PathLike) -> SeriesDataset:
    timestamps, frames, paths = read_timepoints(manifest)
    steps = timestamps.size
    value_frames, mask_frames = frames[:steps], frames[steps:]
    rows = {len(f) for f in value_frames}
    if len(rows) != 1:
        raise DatasetError(f"{manifest}: every timestamp file must hold the same series")
    values = np.stack([_numeric(f, Path(manifest)) for f in value_frames], axis=1)
    mask = None
    if mask_frames:
        mask = np.stack([_numeric(f, Path(manifest)) for f in mask_frames], axis=1)
    return SeriesDataset(values, tuple(str(c) for c in value_frames[0].columns), timestamps, mask)


def write_timepoints(directory: PathLike, timestamps: Sequence[float],
                     matrices: Sequence[np.ndarray], genes: Sequence[str],
                     masks: Optional[Sequence[np.ndarray]] = None) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"timestamps": [float(t) for t in timestamps], "files": []}
    for k, matrix in enumerate(matrices):
        name = f"t{k}.csv"
        pd.DataFrame(np.asarray(matrix), columns=list(genes)).to_csv(out / name, index=False, float_format="%.17g")
        doc["files"].append(name)
    if masks is not None:
        doc["masks"] = []
        for k, mask in enumerate(masks):
            name = f"t{k}.mask.csv"
            pd.DataFrame(np.asarray(mask).astype(np.int64), columns=list(genes)).to_csv(out / name, index=False)
            doc["masks"].append(name)
    manifest = out / "series.json"
    manifest.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def save_series(dataset: SeriesDataset, directory: PathLike) -> Path:
    return write_timepoints(directory, dataset.timestamps,
                            [dataset.values[:, k] for k in range(dataset.n_steps)], dataset.genes,
                            [dataset.mask[:, k] for k in range(dataset.n_steps)])


def series_files(manifest: PathLike) -> List[Path]:
    """The manifest and every value and mask file it lists, for provenance hashing."""
    manifest = Path(manifest)
    doc = json.loads(manifest.read_text(encoding="utf-8"))
    return [manifest] + [manifest.parent / f for f in doc.get("files", []) + doc.get("masks", [])]
