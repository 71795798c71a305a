import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ordered_data
from orderedforest.data import Dataset
from orderedforest.errors import ClassAbsentFromFold, LengthMismatch
from orderedforest.estimators import make_estimator
from orderedforest.forest import ForestParams
from orderedforest.metrics import (ScoreReport, cross_validate, mse, mse_row, rps, rps_row,
                                   score)


def test_hand_examples():
    # class 2 of 3: cumulative truth (0, 1, 1) vs (0.2, 0.7, 1.0) -> (0.04 + 0.09) / 2
    assert rps_row(2, [0.2, 0.5, 0.3]) == pytest.approx(0.065, abs=1e-15)
    assert rps_row(2, [0.2, 0.5, 0.3]) == 0.06500000000000002
    # (0.04 + 0.25 + 0.09) / 3
    assert mse_row(2, [0.2, 0.5, 0.3]) == pytest.approx(0.12666666666666668, abs=1e-12)
    assert rps_row(1, [0.3, 0.7]) == pytest.approx(0.49, abs=1e-15)
    assert rps_row(3, [0.0, 0.0, 1.0]) == 0.0


def test_probability_truth():
    T = np.array([[0.2, 0.3, 0.5]])
    assert rps(T, T)[0] == 0.0
    assert mse(T, [[0.3, 0.3, 0.4]])[0] == pytest.approx((0.01 + 0.01) / 3, abs=1e-15)


probs = st.integers(2, 7).flatmap(
    lambda M: st.tuples(st.just(M), st.lists(st.floats(0.01, 1), min_size=M, max_size=M),
                        st.integers(1, M)))


@settings(max_examples=200, deadline=None)
@given(probs)
def test_score_bounds(case):
    M, w, cls = case
    p = np.array(w) / np.sum(w)
    r, m = rps_row(cls, p), mse_row(cls, p)
    assert 0.0 <= r <= 1.0 + 1e-12
    assert 0.0 <= m <= 2.0 / M + 1e-12
    onehot = np.eye(M)[cls - 1]
    assert rps_row(cls, onehot) == 0.0 and mse_row(cls, onehot) == 0.0


def test_aggregation_is_row_mean():
    rng = np.random.default_rng(0)
    P = rng.dirichlet(np.ones(4), size=500)
    y = rng.integers(1, 5, size=500)
    rep = score(y, P)
    loop_r = np.mean([rps_row(y[i], P[i]) for i in range(500)])
    loop_m = np.mean([mse_row(y[i], P[i]) for i in range(500)])
    assert abs(rep.arps - loop_r) < 1e-14 and abs(rep.amse - loop_m) < 1e-14
    assert (rep.n, rep.m) == (500, 4)


def test_errors():
    with pytest.raises(LengthMismatch):
        rps([1, 2], [[0.5, 0.5]])
    with pytest.raises(ValueError):
        rps([0], [[0.5, 0.5]])
    with pytest.raises(ValueError):
        ScoreReport(-1.0, 0.0, 1, 2)


def unique_rows_data(n=60, M=3):
    ds = ordered_data(n=n, p=2, M=M, seed=3)
    X = np.column_stack([ds.X, np.arange(n, dtype=float)])  # row id as last column
    return Dataset(X, ds.y, ("a", "b", "id"), np.zeros(3, bool), M)


def test_folds_partition_the_rows_without_leaks():
    ds = unique_rows_data()
    seen = []

    def spy(train, X_test, seed):
        tr, te = set(train.X[:, 2]), set(X_test[:, 2])
        assert not tr & te and len(tr | te) == ds.N
        seen.append(te)
        return np.full((len(X_test), ds.M), 1 / ds.M)

    res = cross_validate(ds, {"spy": spy}, k=5, repeats=2, seed=4)
    assert len(seen) == 10
    for r in range(2):
        union = set().union(*seen[5 * r:5 * r + 5])
        assert union == set(range(ds.N))
        assert np.bincount(res.fold_assignments[r]).tolist() == [12] * 5


def test_leave_one_out():
    ds = unique_rows_data(n=15)
    res = cross_validate(ds, {"flat": lambda tr, X, s: np.full((len(X), 3), 1 / 3)},
                         k=15, repeats=1)
    assert len(res.scores["flat"]) == 15
    assert all(r.n == 1 for r in res.scores["flat"])


def test_cross_validation_is_deterministic():
    ds = ordered_data(n=80, seed=1)
    est = {"ologit": make_estimator("ologit"),
           "ordered": make_estimator("ordered", ForestParams(n_trees=20))}
    a = cross_validate(ds, est, k=4, repeats=2, seed=9)
    b = cross_validate(ds, est, k=4, repeats=2, seed=9)
    assert a.to_csv("d") == b.to_csv("d")
    assert a.to_csv("d").splitlines()[0] == "dataset,estimator,metric,mean,sd"
    s = a.summary()
    assert set(s) == {"ologit", "ordered"} and s["ologit"]["arps"][1] >= 0


def test_class_absent_from_fold():
    y = np.array([1] * 20 + [2] * 20 + [3])
    ds = Dataset(np.arange(41.0)[:, None], y, ("x",), np.zeros(1, bool), 3)
    with pytest.raises(ClassAbsentFromFold):
        cross_validate(ds, {}, k=10, repeats=1)
    with pytest.raises(ValueError):
        cross_validate(ds, {}, k=1)
