import numpy as np
import pytest

from bfreg.data import (
    ExpressionDataset, SeriesDataset, load_expression, load_series, make_split,
    make_stratified_split, save_expression, save_series, series_files,
)
from bfreg.errors import DatasetError
from bfreg.numerics import make_generator


def test_split_is_disjoint_and_covering():
    split = make_split(10, make_generator(0), seed=0)
    parts = np.concatenate([split.train, split.validation, split.test])
    assert sorted(parts.tolist()) == list(range(10))
    assert (len(split.train), len(split.validation), len(split.test)) == (6, 2, 2)


def test_split_is_seeded():
    a = make_split(20, make_generator(3))
    b = make_split(20, make_generator(3))
    np.testing.assert_array_equal(a.train, b.train)


def test_tiny_split_keeps_every_part():
    split = make_split(3, make_generator(0))
    assert all(len(p) == 1 for p in (split.train, split.validation, split.test))
    with pytest.raises(DatasetError):
        make_split(2, make_generator(0))


def test_stratified_split_keeps_classes_in_every_part():
    labels = np.array([0] * 10 + [1] * 5)
    split = make_stratified_split(labels, make_generator(0))
    for part in (split.train, split.validation, split.test):
        assert set(labels[part]) == {0, 1}


def test_dataset_validation():
    with pytest.raises(DatasetError):
        ExpressionDataset(np.ones((2, 2)), ("a", "a"))
    with pytest.raises(DatasetError):
        ExpressionDataset(np.ones((2, 2)), ("a", "b"), labels=np.array([0, -1]))
    with pytest.raises(DatasetError):
        ExpressionDataset(np.ones((2, 2)), ("a", "b"), mask=np.full((2, 2), 0.5))
    with pytest.raises(DatasetError, match="increasing"):
        SeriesDataset(np.ones((1, 2, 1)), ("a",), [1.0, 1.0])


def test_align_reorders_columns():
    dataset = ExpressionDataset(np.array([[1.0, 2.0, 3.0]]), ("a", "b", "c"))
    aligned = dataset.align(["c", "a"])
    np.testing.assert_array_equal(aligned.values, [[3.0, 1.0]])
    with pytest.raises(DatasetError, match="z"):
        dataset.align(["z"])


def test_expression_files(tmp_path):
    dataset = ExpressionDataset(np.array([[0.5, 1.0], [2.0, 0.0]]), ("g1", "g2"), labels=np.array([1, 0]),
                                mask=np.array([[1.0, 1.0], [1.0, 0.0]]))
    written = save_expression(dataset, tmp_path / "x.csv", tmp_path / "x.mask.csv")
    assert [p.name for p in written] == ["x.csv", "x.mask.csv"]
    loaded = load_expression(tmp_path / "x.csv", tmp_path / "x.mask.csv")
    np.testing.assert_array_equal(loaded.values, dataset.values)
    np.testing.assert_array_equal(loaded.labels, [1, 0])
    np.testing.assert_array_equal(loaded.mask, dataset.mask)
    assert loaded.n_classes == 2


def test_non_numeric_column(tmp_path):
    (tmp_path / "x.csv").write_text("g1,g2\n1,abc\n")
    with pytest.raises(DatasetError, match="non-numeric"):
        load_expression(tmp_path / "x.csv")


def test_missing_file(tmp_path):
    with pytest.raises(DatasetError, match="not found"):
        load_expression(tmp_path / "nope.csv")


def test_series_files(tmp_path):
    values = make_generator(0).normal(size=(3, 4, 2))
    dataset = SeriesDataset(values, ("g1", "g2"), [0.0, 1.0, 2.0, 5.0])
    manifest = save_series(dataset, tmp_path / "series")
    loaded = load_series(manifest)
    np.testing.assert_array_equal(loaded.values, values)
    np.testing.assert_array_equal(loaded.timestamps, [0.0, 1.0, 2.0, 5.0])
    assert len(series_files(manifest)) == 1 + 4 + 4


def test_series_manifest_needs_a_file_per_timestamp(tmp_path):
    (tmp_path / "s.json").write_text('{"timestamps": [0, 1], "files": ["t0.csv"]}')
    with pytest.raises(DatasetError, match="one file per timestamp"):
        load_series(tmp_path / "s.json")
