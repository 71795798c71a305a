import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orderedforest import forest as fc
from orderedforest.errors import AllLeavesEmpty, ColumnMismatch, EmptyData


# --- brute-force tree oracle -------------------------------------------------

def floyd_sorted(u, p, mtry):
    taken = set()
    for i, j in enumerate(range(p - mtry, p)):
        t = min(int(u[i] * (j + 1)), j)
        taken.add(j if t in taken else t)
    return sorted(taken)


def sse(v):
    return float(((v - v.mean()) ** 2).sum()) if len(v) else 0.0


def oracle_tree(X, y, struct, est, honest, mtry, min_leaf, draws):
    """Exhaustive recursive CART: every midpoint, SSE recomputed from scratch."""
    nodes = []

    def grow(S, E):
        me = len(nodes)
        nodes.append(None)
        best = None
        can = len(S) >= 2 * min_leaf and (not honest or len(E) >= 2 * min_leaf)
        if can:
            parent = sse(y[S])
            cands = []
            for f in floyd_sorted(draws[me], X.shape[1], mtry):
                vals = np.unique(X[S, f])
                for a, b in zip(vals[:-1], vals[1:]):
                    t = a + (b - a) * 0.5
                    left = X[S, f] <= t
                    if left.sum() < min_leaf or (~left).sum() < min_leaf:
                        continue
                    if honest:
                        el = (X[E, f] <= t).sum()
                        if el < min_leaf or len(E) - el < min_leaf:
                            continue
                    gain = parent - sse(y[S][left]) - sse(y[S][~left])
                    cands.append((gain, f, t))
            if cands:
                top = max(c[0] for c in cands)
                tol = 1e-9 * max(1.0, float((y[S] ** 2).sum()))
                first = next(c for c in cands if c[0] >= top - tol)
                if first[0] > 1e-10 * float((y[S] ** 2).sum()) and parent > 0:
                    best = first
        if best is None:
            nodes[me] = ("leaf", sorted(E.tolist()))
            return me
        _, f, t = best
        lid = grow(S[X[S, f] <= t], E[X[E, f] <= t])
        rid = grow(S[X[S, f] > t], E[X[E, f] > t])
        nodes[me] = ("split", f, t, lid, rid)
        return me

    grow(np.asarray(struct), np.asarray(est))
    return nodes


@pytest.mark.parametrize("honest", [False, True])
@pytest.mark.parametrize("seed", range(6))
def test_tree_matches_brute_force(honest, seed):
    rng = np.random.default_rng(seed)
    n, p = 30, 2
    X = rng.normal(size=(n, p))
    if seed % 2:
        # binary outcome: many exactly tied scores
        y = (X[:, 0] + rng.normal(size=n) > 0).astype(float)
    else:
        y = X[:, 0] ** 2 + rng.normal(size=n)
    params = fc.ForestParams(n_trees=1, mtry=1 + seed % 2, min_leaf=3, honest=honest,
                             subsample_fraction=1.0 if honest else None, seed=seed)
    f = fc.fit_forest(X, y, params)
    tree = f.tree(0)
    struct, est, draws = fc.draw_tree_randomness(params, n, p, 0)
    ref = oracle_tree(X, y, struct, est, honest, params.resolve_mtry(p), params.min_leaf, draws)
    assert tree.n_nodes == len(ref)
    for j, node in enumerate(ref):
        if node[0] == "leaf":
            assert tree.left[j] == -1
            assert sorted(tree.member_ids[j].tolist()) == node[1]
            if node[1]:
                assert tree.value[j] == pytest.approx(y[node[1]].mean(), abs=1e-14)
        else:
            _, feat, thr, lid, rid = node
            assert (tree.feature[j], tree.left[j], tree.right[j]) == (feat, lid, rid)
            assert tree.threshold[j] == pytest.approx(thr, abs=1e-12)


def test_choose_features_matches_floyd():
    from orderedforest._kernels import choose_features
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = int(rng.integers(1, 12))
        m = int(rng.integers(1, p + 1))
        u = rng.random(m)
        out = np.empty(m, dtype=np.int64)
        k = choose_features(u, p, m, out)
        assert k == m
        assert out.tolist() == floyd_sorted(u, p, m)


# --- forest-level behaviour ---------------------------------------------------

def make(n=120, p=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] + rng.normal(scale=0.3, size=n)
    return X, y


@pytest.mark.parametrize("honest", [False, True])
def test_weight_identity_and_normalisation(honest):
    X, y = make()
    f = fc.fit_forest(X, y, fc.ForestParams(n_trees=60, honest=honest, seed=1))
    Q = np.random.default_rng(2).normal(size=(100, X.shape[1]))
    W = fc.extract_weights(f, Q)
    assert np.all(W >= 0)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(fc.predict(f, Q), W @ y, atol=1e-12)


def test_honest_leaves_hold_min_leaf_estimation_rows():
    X, y = make(n=200)
    f = fc.fit_forest(X, y, fc.ForestParams(n_trees=30, honest=True, seed=4, min_leaf=5))
    for t in f.trees:
        leaves = t.leaves
        assert np.all(t.n_est[leaves] >= 5)
        est = set(t.estimation_ids.tolist())
        struct = set(t.sample_ids.tolist())
        assert not est & struct
        assert len(struct) == 50 and len(est) == 50


def test_bootstrap_members_are_a_multiset():
    X, y = make(n=80)
    f = fc.fit_forest(X, y, fc.ForestParams(n_trees=5, seed=2))
    for t in f.trees:
        members = np.concatenate([t.member_ids[j] for j in t.leaves])
        np.testing.assert_array_equal(np.sort(members), np.sort(t.sample_ids))
        assert len(members) == 80


def test_shared_randomness_across_member_forests():
    X, y = make()
    y2 = (y > 0).astype(float)
    a, b = fc.fit_forests(X, [y, y2], fc.ForestParams(n_trees=10, seed=9))
    np.testing.assert_array_equal(a.sample_ids, b.sample_ids)
    assert not np.array_equal(a.threshold, b.threshold)


def test_parallel_fit_is_bit_identical():
    X, y = make()
    one = fc.fit_forest(X, y, fc.ForestParams(n_trees=40, seed=5, n_jobs=1))
    four = fc.fit_forest(X, y, fc.ForestParams(n_trees=40, seed=5, n_jobs=4))
    for name in fc._ARRAY_FIELDS:
        np.testing.assert_array_equal(getattr(one, name), getattr(four, name))
    Q = np.random.default_rng(0).normal(size=(50, 4))
    assert np.array_equal(fc.predict(one, Q, n_jobs=1), fc.predict(one, Q, n_jobs=3))
    assert np.array_equal(fc.extract_weights(one, Q, n_jobs=1), fc.extract_weights(one, Q, n_jobs=3))


def test_roundtrip_serialisation():
    X, y = make()
    f = fc.fit_forest(X, y, fc.ForestParams(n_trees=8, honest=True, seed=5))
    g = fc.Forest.from_dict(json.loads(json.dumps(f.to_dict())))
    Q = np.random.default_rng(0).normal(size=(20, 4))
    assert np.array_equal(fc.predict(f, Q), fc.predict(g, Q))


def test_oob_uses_only_out_of_bag_trees():
    X, y = make(n=60)
    f = fc.fit_forest(X, y, fc.ForestParams(n_trees=50, seed=3))
    oob = fc.predict_oob(f, X)
    inbag = f.inbag_mask()
    i = 7
    vals = [f.tree(b).value[f.tree(b).apply(X[i])] for b in range(50) if not inbag[b, i]]
    assert oob[i] == pytest.approx(np.mean(vals), abs=1e-14)


def test_repopulate_and_external_weights():
    X, y = make(n=100)
    f = fc.fit_forest(X, y, fc.ForestParams(n_trees=30, honest=True, seed=1))
    X2, y2 = make(n=70, seed=8)
    g = fc.repopulate(f, X2, y2)
    Q = np.random.default_rng(4).normal(size=(10, 4))
    W = fc.extract_weights(g, Q)
    assert W.shape == (10, 70)
    np.testing.assert_allclose(W @ y2, fc.predict(g, Q), atol=1e-12)
    np.testing.assert_allclose(fc.extract_weights(f, Q, target=X2), W, atol=1e-14)


def test_errors():
    X, y = make(n=30)
    with pytest.raises(EmptyData):
        fc.fit_forest(X[:5], y[:5], fc.ForestParams(min_leaf=5))
    with pytest.raises(ValueError):
        fc.fit_forest(X, y, fc.ForestParams(mtry=9))
    f = fc.fit_forest(X, y, fc.ForestParams(n_trees=3))
    with pytest.raises(ColumnMismatch):
        fc.predict(f, np.zeros((1, 2)))
    with pytest.raises(ValueError):
        fc.ForestParams(subsample_fraction=0.0)


def test_all_leaves_empty_raises():
    X, y = make(n=40)
    f = fc.fit_forest(X, y, fc.ForestParams(n_trees=2, honest=True, seed=0))
    g = fc.repopulate(f, X[:0], y[:0])
    with pytest.raises(AllLeavesEmpty):
        fc.extract_weights(g, X[:1])
    assert np.isnan(fc.predict(g, X[0]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), honest=st.booleans(), min_leaf=st.integers(1, 6))
def test_weight_identity_property(seed, honest, min_leaf):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2 * min_leaf + 4, 60))
    X = rng.normal(size=(n, 3))
    y = rng.integers(0, 2, size=n).astype(float)
    f = fc.fit_forest(X, y, fc.ForestParams(n_trees=10, honest=honest, min_leaf=min_leaf,
                                            seed=seed))
    Q = rng.normal(size=(5, 3))
    try:
        W = fc.extract_weights(f, Q)
    except AllLeavesEmpty:
        return
    np.testing.assert_allclose(W @ y, fc.predict(f, Q), atol=1e-12)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((fc.predict(f, Q) >= -1e-15) & (fc.predict(f, Q) <= 1 + 1e-15))
