import numpy as np
import pytest

from orderedforest.data import (Dataset, detect_categorical, encode_labels, fold_assignments,
                                load_covariates, load_csv, split_folds, split_halves)
from orderedforest.errors import (EmptyData, KTooLarge, LengthMismatch, MissingColumn,
                                  MissingValue, NonNumericCell, SingleClassOutcome)


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_csv_relabels_and_flags_categorical(tmp_path):
    path = write(tmp_path, "age,kids,y\n30.5,0,2\n41.0,2,4\n22.25,1,2\n50.0,3,7\n")
    ds = load_csv(path, "y")
    assert ds.col_names == ("age", "kids")
    assert ds.label_values == (2, 4, 7)
    np.testing.assert_array_equal(ds.y, [1, 2, 1, 3])
    np.testing.assert_array_equal(ds.categorical_mask, [False, True])
    np.testing.assert_array_equal(ds.decode([1, 3]), [2, 7])
    np.testing.assert_array_equal(ds.encode([7, 2]), [3, 1])


def test_load_csv_overrides(tmp_path):
    path = write(tmp_path, "a,b,y\n1,0.5,1\n2,1.5,2\n3,2.5,1\n")
    ds = load_csv(path, "y", categorical_columns=["b"], continuous_columns=["a"])
    np.testing.assert_array_equal(ds.categorical_mask, [False, True])


@pytest.mark.parametrize("text, error", [
    ("a,y\n1,1\n2,2\n", None),
    ("a,z\n1,1\n2,2\n", MissingColumn),
    ("a,y\nfoo,1\n2,2\n", NonNumericCell),
    ("a,y\n,1\n2,2\n", MissingValue),
    ("a,y\nNA,1\n2,2\n", MissingValue),
    ("a,y\n1,1\n2,1\n", SingleClassOutcome),
    ("a,y\n1,1.5\n2,2\n", NonNumericCell),
    ("a,y\n", EmptyData),
    ("", EmptyData),
    ("a,y\n1\n2,2\n", MissingValue),
])
def test_load_csv_errors(tmp_path, text, error):
    path = write(tmp_path, text)
    if error is None:
        assert load_csv(path, "y").N == 2
    else:
        with pytest.raises(error):
            load_csv(path, "y")


def test_load_covariates_selects_by_name(tmp_path):
    path = write(tmp_path, "b,y,a\n1,9,2\n3,9,4\n")
    np.testing.assert_array_equal(load_covariates(path, ["a", "b"]), [[2, 1], [4, 3]])
    with pytest.raises(MissingColumn):
        load_covariates(path, ["c"])


def test_dataset_is_read_only_and_validated():
    ds = Dataset(np.zeros((3, 2)), [1, 2, 2], ("a", "b"), None, 2)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0
    with pytest.raises(LengthMismatch):
        Dataset(np.zeros((3, 2)), [1, 2], ("a", "b"), None, 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), [1, 2, 3], ("a", "b"), None, 2)
    with pytest.raises(MissingValue):
        Dataset(np.array([[np.nan, 1.0], [0, 0], [0, 0]]), [1, 2, 1], ("a", "b"), None, 2)
    with pytest.raises(SingleClassOutcome):
        Dataset(np.zeros((3, 1)), [1, 1, 1], ("a",), None, 1)


def test_encode_labels_preserves_order():
    y, levels = encode_labels([10, -3, 10, 4])
    np.testing.assert_array_equal(y, [3, 1, 3, 2])
    assert levels == (-3, 4, 10)


def test_detect_categorical():
    X = np.column_stack([np.arange(20) % 3, np.linspace(0, 1, 20), np.arange(20)])
    np.testing.assert_array_equal(detect_categorical(X), [True, False, False])


def test_split_helpers():
    h = split_halves(11, np.random.default_rng(0))
    assert h.sum() == 6
    plans = split_folds(23, 5, repeats=3, seed=4)
    assert len(plans) == 3
    for plan in plans:
        sizes = np.bincount(plan.fold_assignments)
        assert sizes.max() - sizes.min() <= 1 and sizes.sum() == 23
        seen = np.concatenate([test for _, test in plan.folds()])
        np.testing.assert_array_equal(np.sort(seen), np.arange(23))
    again = split_folds(23, 5, repeats=3, seed=4)
    for a, b in zip(plans, again):
        np.testing.assert_array_equal(a.fold_assignments, b.fold_assignments)
    with pytest.raises(KTooLarge):
        split_folds(4, 5)
    loo = fold_assignments(7, 7, np.random.default_rng(1))
    np.testing.assert_array_equal(np.sort(loo), np.arange(7))
