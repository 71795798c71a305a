"""Regression random forests with classic bootstrap or honest subsampled trees.

A fitted :class:`Forest` keeps, for every tree, the rows used to place splits
and the rows whose outcomes fill the leaves. That is enough to recover the
prediction weights exactly: for a query ``x`` the forest prediction equals
``extract_weights(forest, x) @ y``.
"""

from __future__ import annotations

import base64
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import AllLeavesEmpty, ColumnMismatch, EmptyData

FOREST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    """Tuning parameters shared by every tree of a forest.

    ``mtry=None`` resolves to ``ceil(sqrt(p))`` at fit time and
    ``subsample_fraction=None`` to 0.5 in honest mode and 1.0 (with
    replacement) otherwise.
    """

    n_trees: int = 1000
    mtry: int | None = None
    min_leaf: int = 5
    honest: bool = False
    subsample_fraction: float | None = None
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be at least 1")
        frac = self.subsample_fraction
        if frac is not None and not (0.0 < frac <= 1.0):
            raise ValueError("subsample_fraction must lie in (0, 1]")

    def resolve_mtry(self, p: int) -> int:
        mtry = math.ceil(math.sqrt(p)) if self.mtry is None else self.mtry
        if mtry > p:
            raise ValueError(f"mtry={mtry} exceeds the number of covariates p={p}")
        return mtry

    def resolve_fraction(self) -> float:
        if self.subsample_fraction is not None:
            return self.subsample_fraction
        return 0.5 if self.honest else 1.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("n_trees", "mtry", "min_leaf", "honest", "subsample_fraction", "seed")}


@dataclass(frozen=True)
class Tree:
    """Read-only view of one tree of a :class:`Forest`."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_est: np.ndarray
    member_ids: list
    sample_ids: np.ndarray
    estimation_ids: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left < 0)

    def apply(self, x) -> int:
        """Local id of the leaf containing ``x``."""
        node = 0
        while self.left[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return int(node)


@dataclass(frozen=True)
class Forest:
    """Flat storage of ``n_trees`` trees.

    Node arrays of tree ``b`` live in ``[node_off[b], node_off[b + 1])``; its
    leaf members in ``members[member_off[b]:member_off[b + 1]]`` with
    per-leaf ``member_start`` offsets local to that block. ``n_train`` is the
    size of the population the members index into.
    """

    params: ForestParams
    n_train: int
    p: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_est: np.ndarray
    member_start: np.ndarray
    node_off: np.ndarray
    members: np.ndarray
    member_off: np.ndarray
    sample_ids: np.ndarray
    sample_off: np.ndarray
    estimation_ids: np.ndarray
    estimation_off: np.ndarray
    repopulated: bool = False
    _inbag: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_trees(self) -> int:
        return self.node_off.shape[0] - 1

    def tree(self, b: int) -> Tree:
        lo, hi = self.node_off[b], self.node_off[b + 1]
        block = self.members[self.member_off[b]:self.member_off[b + 1]]
        left = self.left[lo:hi]
        n_est = self.n_est[lo:hi]
        starts = self.member_start[lo:hi]
        member_ids = [block[starts[j]:starts[j] + n_est[j]].copy() if left[j] < 0 else None
                      for j in range(hi - lo)]
        return Tree(self.feature[lo:hi], self.threshold[lo:hi], left, self.right[lo:hi],
                    self.value[lo:hi], n_est, member_ids,
                    self.sample_ids[self.sample_off[b]:self.sample_off[b + 1]],
                    self.estimation_ids[self.estimation_off[b]:self.estimation_off[b + 1]])

    @property
    def trees(self) -> list[Tree]:
        return [self.tree(b) for b in range(self.n_trees)]

    def _node_arrays(self):
        return self.feature, self.threshold, self.left, self.right

    def inbag_mask(self) -> np.ndarray:
        """(B, n_train) mask of rows used by each tree, structure or estimation."""
        if self._inbag is not None:
            return self._inbag
        mask = np.zeros((self.n_trees, self.n_train), dtype=np.bool_)
        for b in range(self.n_trees):
            mask[b, self.sample_ids[self.sample_off[b]:self.sample_off[b + 1]]] = True
            mask[b, self.estimation_ids[self.estimation_off[b]:self.estimation_off[b + 1]]] = True
        object.__setattr__(self, "_inbag", mask)
        return mask

    def to_dict(self) -> dict:
        arrays = {name: _encode_array(getattr(self, name)) for name in _ARRAY_FIELDS}
        return {"format": "orderedforest.Forest", "version": FOREST_FORMAT_VERSION,
                "params": self.params.to_dict(), "n_train": self.n_train, "p": self.p,
                "repopulated": self.repopulated, "arrays": arrays}

    @classmethod
    def from_dict(cls, doc: dict) -> "Forest":
        if doc.get("format") != "orderedforest.Forest" or doc.get("version") != FOREST_FORMAT_VERSION:
            raise ValueError("not a supported forest document")
        arrays = {name: _decode_array(doc["arrays"][name]) for name in _ARRAY_FIELDS}
        return cls(params=ForestParams(**doc["params"]), n_train=doc["n_train"], p=doc["p"],
                   repopulated=doc["repopulated"], **arrays)


_ARRAY_FIELDS = ("feature", "threshold", "left", "right", "value", "n_est", "member_start",
                 "node_off", "members", "member_off", "sample_ids", "sample_off",
                 "estimation_ids", "estimation_off")


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    dtype = a.dtype.newbyteorder("<")
    return {"dtype": dtype.str, "shape": list(a.shape),
            "data": base64.b64encode(a.astype(dtype, copy=False).tobytes()).decode("ascii")}


def _decode_array(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    return np.frombuffer(raw, dtype=np.dtype(doc["dtype"])).reshape(doc["shape"]).copy()


def _max_nodes(n_struct: int, min_leaf: int) -> int:
    return max(1, 2 * (n_struct // min_leaf) - 1)


def draw_tree_randomness(params: ForestParams, n: int, p: int, b: int):
    """Row samples and per-node feature draws for tree ``b``.

    Every tree owns the stream ``default_rng([seed, b])`` so the result does
    not depend on how trees are scheduled across threads.
    """
    rng = np.random.default_rng([params.seed, b])
    mtry = params.resolve_mtry(p)
    frac = params.resolve_fraction()
    if params.honest:
        n_sub = max(2, int(math.floor(frac * n)))
        n_sub = min(n_sub, n)
        sub = rng.choice(n, size=n_sub, replace=False)
        n_struct = n_sub // 2
        struct_idx, est_idx = sub[:n_struct], sub[n_struct:]
    else:
        n_draw = max(1, int(round(frac * n)))
        struct_idx = rng.integers(0, n, size=n_draw)
        est_idx = struct_idx
    draws = rng.random((_max_nodes(len(struct_idx), params.min_leaf), mtry))
    return struct_idx.astype(np.int64), est_idx.astype(np.int64), draws


def _check_inputs(X, ys, params: ForestParams):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyData("X must be a non-empty two-dimensional array")
    ys = [np.ascontiguousarray(y, dtype=np.float64) for y in ys]
    for y in ys:
        if y.shape != (X.shape[0],):
            raise ValueError("rows(X) must equal len(y)")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if X.shape[0] < 2 * params.min_leaf:
        raise EmptyData(f"need at least 2*min_leaf={2 * params.min_leaf} rows, got {X.shape[0]}")
    params.resolve_mtry(X.shape[1])
    return X, ys


def fit_forests(X, ys, params: ForestParams) -> list[Forest]:
    """Fit one forest per outcome vector in ``ys``, sharing every random draw.

    Tree ``b`` of each forest sees the same row sample and the same feature
    draws, so forests differ only through their outcomes.
    """
    X, ys = _check_inputs(X, ys, params)
    n, p = X.shape
    mtry = params.resolve_mtry(p)

    def grow(b):
        struct_idx, est_idx, draws = draw_tree_randomness(params, n, p, b)
        out = [_kernels.build_tree(X, y, struct_idx, est_idx, params.honest, mtry,
                                   params.min_leaf, draws) for y in ys]
        return struct_idx, est_idx, out

    if params.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=params.n_jobs) as pool:
            grown = list(pool.map(grow, range(params.n_trees)))
    else:
        grown = [grow(b) for b in range(params.n_trees)]

    sample_ids = np.concatenate([g[0] for g in grown]).astype(np.int32)
    sample_off = np.concatenate([[0], np.cumsum([len(g[0]) for g in grown])]).astype(np.int64)
    est_ids = np.concatenate([g[1] for g in grown]).astype(np.int32)
    est_off = np.concatenate([[0], np.cumsum([len(g[1]) for g in grown])]).astype(np.int64)

    forests = []
    for k in range(len(ys)):
        parts = [g[2][k] for g in grown]
        node_off = np.concatenate([[0], np.cumsum([len(t[0]) for t in parts])]).astype(np.int64)
        member_off = np.concatenate([[0], np.cumsum([len(t[7]) for t in parts])]).astype(np.int64)
        forests.append(Forest(
            params=params, n_train=n, p=p,
            feature=np.concatenate([t[0] for t in parts]),
            threshold=np.concatenate([t[1] for t in parts]),
            left=np.concatenate([t[2] for t in parts]),
            right=np.concatenate([t[3] for t in parts]),
            value=np.concatenate([t[4] for t in parts]),
            n_est=np.concatenate([t[5] for t in parts]),
            member_start=np.concatenate([t[6] for t in parts]),
            node_off=node_off,
            members=np.concatenate([t[7] for t in parts]).astype(np.int32),
            member_off=member_off,
            sample_ids=sample_ids, sample_off=sample_off,
            estimation_ids=est_ids, estimation_off=est_off,
        ))
    return forests


def fit_forest(X, y, params: ForestParams) -> Forest:
    """Fit a regression forest of ``params.n_trees`` trees.

    Parameters
    ----------
    X : (N, p) array_like
        Covariates.
    y : (N,) array_like
        Real outcomes.
    params : ForestParams
        Tuning parameters; ``params.honest`` switches from bootstrap trees
        to honest trees grown on half of a subsample and filled from the
        other half.

    Returns
    -------
    Forest
    """
    return fit_forests(X, [y], params)[0]


def _as_queries(forest: Forest, x):
    Q = np.ascontiguousarray(x, dtype=np.float64)
    single = Q.ndim == 1
    Q = np.atleast_2d(Q)
    if Q.shape[1] != forest.p:
        raise ColumnMismatch(f"expected {forest.p} columns, got {Q.shape[1]}")
    return Q, single


def _row_chunks(n: int, n_jobs: int):
    k = max(1, min(n_jobs, n))
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [(bounds[i], bounds[i + 1]) for i in range(k)]


def _parallel_rows(n_rows: int, n_jobs: int, work):
    chunks = _row_chunks(n_rows, n_jobs)
    if len(chunks) == 1:
        work(*chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(lambda c: work(*c), chunks))


def predict_with_counts(forest: Forest, x, n_jobs: int | None = None):
    """Sum of nonempty leaf values and their tree counts for each query row."""
    Q, _ = _as_queries(forest, x)
    s = np.zeros(Q.shape[0])
    c = np.zeros(Q.shape[0], dtype=np.int64)

    def work(lo, hi):
        _kernels.predict_sum(Q[lo:hi], forest.feature, forest.threshold, forest.left,
                             forest.right, forest.value, forest.n_est, forest.node_off,
                             s[lo:hi], c[lo:hi])

    _parallel_rows(Q.shape[0], n_jobs or forest.params.n_jobs, work)
    return s, c


def predict(forest: Forest, x, n_jobs: int | None = None):
    """Average leaf value over trees whose leaf at ``x`` holds estimation data.

    Accepts a single p-vector (returns a float) or an (n, p) matrix. Rows
    where every such leaf is empty come back as NaN.
    """
    _, single = _as_queries(forest, x)
    s, c = predict_with_counts(forest, x, n_jobs)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(c > 0, s / np.maximum(c, 1), np.nan)
    return float(out[0]) if single else out


def predict_oob(forest: Forest, X_train, rows=None, n_jobs: int | None = None) -> np.ndarray:
    """Out-of-bag predictions for training rows.

    A tree votes for training row ``i`` only if ``i`` was neither in its split
    sample nor in its estimation sample. ``rows`` gives the training index of
    each row of ``X_train`` (default: all rows in order).
    """
    if forest.repopulated:
        raise ValueError("out-of-bag prediction needs the original fitting population")
    Q, _ = _as_queries(forest, X_train)
    rows = np.arange(Q.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.max(initial=-1) >= forest.n_train:
        raise ValueError("row index outside the training population")
    inbag = forest.inbag_mask()
    s = np.zeros(Q.shape[0])
    c = np.zeros(Q.shape[0], dtype=np.int64)

    def work(lo, hi):
        _kernels.predict_oob_sum(Q[lo:hi], rows[lo:hi], forest.feature, forest.threshold,
                                 forest.left, forest.right, forest.value, forest.n_est,
                                 forest.node_off, inbag, s[lo:hi], c[lo:hi])

    _parallel_rows(Q.shape[0], n_jobs or forest.params.n_jobs, work)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(c > 0, s / np.maximum(c, 1), np.nan)


def extract_weights(forest: Forest, x, target=None, n_jobs: int | None = None) -> np.ndarray:
    """Forest weights of the query point(s) ``x``.

    Parameters
    ----------
    forest : Forest
    x : (p,) or (n, p) array_like
        Query point(s).
    target : (n_t, p) array_like, optional
        External rows that populate the leaves instead of the stored
        estimation members. Weight ``i`` then refers to ``target[i]``.

    Returns
    -------
    ndarray
        Shape ``(n_pop,)`` for a single query or ``(n, n_pop)`` otherwise;
        every row is nonnegative and sums to one.

    Raises
    ------
    AllLeavesEmpty
        If no tree has estimation data in the leaf containing a query.
    """
    Q, single = _as_queries(forest, x)
    if target is None:
        W = np.zeros((Q.shape[0], forest.n_train))
    else:
        T = np.ascontiguousarray(target, dtype=np.float64)
        if T.ndim != 2 or T.shape[1] != forest.p:
            raise ColumnMismatch("target rows must have the forest's column count")
        leaves = _kernels.leaf_ids(T, *forest._node_arrays(), forest.node_off)
        W = np.zeros((Q.shape[0], T.shape[0]))
    cnt = np.zeros(Q.shape[0], dtype=np.int64)

    def work(lo, hi):
        if target is None:
            _kernels.weights_stored(Q[lo:hi], *forest._node_arrays(), forest.n_est,
                                    forest.node_off, forest.member_start, forest.members,
                                    forest.member_off, W[lo:hi], cnt[lo:hi])
        else:
            _kernels.weights_external(Q[lo:hi], *forest._node_arrays(), forest.node_off,
                                      leaves, W[lo:hi], cnt[lo:hi])

    _parallel_rows(Q.shape[0], n_jobs or forest.params.n_jobs, work)
    if np.any(cnt == 0):
        raise AllLeavesEmpty("no tree has estimation observations in the leaf at the query")
    W /= cnt[:, None]
    return W[0] if single else W


def repopulate(forest: Forest, X, y) -> Forest:
    """Keep the tree structures but refill every leaf from ``(X, y)``.

    The returned forest predicts weighted means of ``y`` and its weights index
    the rows of ``X``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != forest.p:
        raise ColumnMismatch("repopulating rows must have the forest's column count")
    value, n_est, member_start, members, member_off = _kernels.repopulate(
        X, y, *forest._node_arrays(), forest.node_off)
    n = X.shape[0]
    return replace(forest, n_train=n, value=value, n_est=n_est, member_start=member_start,
                   members=members, member_off=member_off,
                   estimation_ids=np.tile(np.arange(n, dtype=np.int32), forest.n_trees),
                   estimation_off=np.arange(forest.n_trees + 1, dtype=np.int64) * n,
                   repopulated=True, _inbag=None)
