"""Compiled tree kernels.

Trees are stored as flat node arrays; ``left[node] == -1`` marks a leaf.
Estimation members of a leaf occupy ``members[start:start + count]`` of the
tree's member block. All kernels release the GIL so callers can fan out over
threads.
"""

import numpy as np
from numba import njit

# Relative tolerance under which two split scores count as tied.
SCORE_RTOL = 1e-12
# A split must reduce the node sum of squares by more than this fraction.
GAIN_RTOL = 1e-10


@njit(cache=True, nogil=True)
def choose_features(u, p, mtry, out):
    """Draw ``mtry`` of ``p`` features without replacement (Floyd), sorted.

    ``u`` holds ``mtry`` uniforms on [0, 1); the result is written into ``out``.
    """
    taken = np.zeros(p, dtype=np.bool_)
    i = 0
    for j in range(p - mtry, p):
        t = int(u[i] * (j + 1))
        if t > j:
            t = j
        if taken[t]:
            taken[j] = True
        else:
            taken[t] = True
        i += 1
    n = 0
    for f in range(p):
        if taken[f]:
            out[n] = f
            n += 1
    return n


@njit(cache=True, nogil=True)
def _midpoint(a, b):
    t = a + (b - a) * 0.5
    if t >= b:
        t = a
    return t


@njit(cache=True, nogil=True)
def build_tree(X, y, struct_idx, est_idx, honest, mtry, min_leaf, draws):
    """Grow one regression tree.

    Nodes are numbered in depth-first preorder; a node that attempts a split
    uses ``draws[node_id]`` to pick its candidate features.

    Returns ``(feature, threshold, left, right, value, n_est, member_start,
    members)`` trimmed to the number of nodes.
    """
    p = X.shape[1]
    max_nodes = draws.shape[0]
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.full(max_nodes, np.nan)
    n_est = np.zeros(max_nodes, dtype=np.int32)
    member_start = np.zeros(max_nodes, dtype=np.int32)

    sidx = struct_idx.copy()
    eidx = est_idx.copy()
    feats = np.empty(mtry, dtype=np.int64)
    vals_buf = np.empty(sidx.shape[0])
    ys_buf = np.empty(sidx.shape[0])
    evals_buf = np.empty(eidx.shape[0])

    # stack entries: start, end, est_start, est_end, parent, is_left
    stack = np.empty((max_nodes + 1, 6), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = sidx.shape[0]
    stack[0, 2] = 0
    stack[0, 3] = eidx.shape[0]
    stack[0, 4] = -1
    stack[0, 5] = 0
    top = 1
    count = 0

    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        es = stack[top, 2]
        ee = stack[top, 3]
        parent = stack[top, 4]
        node = count
        count += 1
        if parent >= 0:
            if stack[top, 5] == 1:
                left[parent] = node
            else:
                right[parent] = node

        n = end - start
        ne = ee - es
        best_f = -1
        best_t = 0.0
        can_split = n >= 2 * min_leaf
        if honest and ne < 2 * min_leaf:
            can_split = False
        if can_split and node < max_nodes:
            s_tot = 0.0
            ss_tot = 0.0
            for a in range(start, end):
                v = y[sidx[a]]
                s_tot += v
                ss_tot += v * v
            base = s_tot * s_tot / n
            best_score = -np.inf
            nf = choose_features(draws[node], p, mtry, feats)
            vals = vals_buf[:n]
            ys = ys_buf[:n]
            evals = evals_buf[:ne]
            for fi in range(nf):
                f = feats[fi]
                for a in range(n):
                    vals[a] = X[sidx[start + a], f]
                order = np.argsort(vals, kind="mergesort")
                sv = vals[order]
                if sv[0] == sv[n - 1]:
                    continue
                for a in range(n):
                    ys[a] = y[sidx[start + order[a]]]
                if honest:
                    for a in range(ne):
                        evals[a] = X[eidx[es + a], f]
                    evals.sort()
                ptr = 0
                s_left = 0.0
                for i in range(n - 1):
                    s_left += ys[i]
                    n_left = i + 1
                    if n_left < min_leaf:
                        continue
                    if n - n_left < min_leaf:
                        break
                    if sv[i] == sv[i + 1]:
                        continue
                    thr = _midpoint(sv[i], sv[i + 1])
                    if honest:
                        while ptr < ne and evals[ptr] <= thr:
                            ptr += 1
                        if ptr < min_leaf:
                            continue
                        if ne - ptr < min_leaf:
                            break
                    s_right = s_tot - s_left
                    score = s_left * s_left / n_left + s_right * s_right / (n - n_left)
                    if best_f < 0 or score > best_score + SCORE_RTOL * abs(best_score):
                        best_score = score
                        best_f = f
                        best_t = thr
            if best_f >= 0:
                sse = ss_tot - base
                if not (best_score - base > GAIN_RTOL * abs(ss_tot)) or sse <= 0.0:
                    best_f = -1

        if best_f < 0:
            total = 0.0
            for a in range(es, ee):
                total += y[eidx[a]]
            n_est[node] = ne
            member_start[node] = es
            if ne > 0:
                value[node] = total / ne
            continue

        feature[node] = best_f
        threshold[node] = best_t
        # in-place partitions: rows with x <= threshold move to the front
        mid = start
        for a in range(start, end):
            if X[sidx[a], best_f] <= best_t:
                tmp = sidx[mid]
                sidx[mid] = sidx[a]
                sidx[a] = tmp
                mid += 1
        emid = es
        for a in range(es, ee):
            if X[eidx[a], best_f] <= best_t:
                tmp = eidx[emid]
                eidx[emid] = eidx[a]
                eidx[a] = tmp
                emid += 1
        # push right first so the left child is numbered next
        stack[top, 0] = mid
        stack[top, 1] = end
        stack[top, 2] = emid
        stack[top, 3] = ee
        stack[top, 4] = node
        stack[top, 5] = 0
        top += 1
        stack[top, 0] = start
        stack[top, 1] = mid
        stack[top, 2] = es
        stack[top, 3] = emid
        stack[top, 4] = node
        stack[top, 5] = 1
        top += 1

    return (feature[:count], threshold[:count], left[:count], right[:count],
            value[:count], n_est[:count], member_start[:count], eidx)


@njit(cache=True, nogil=True, inline="always")
def find_leaf(Q, r, feature, threshold, left, right, offset):
    node = offset
    while left[node] >= 0:
        if Q[r, feature[node]] <= threshold[node]:
            node = offset + left[node]
        else:
            node = offset + right[node]
    return node - offset


@njit(cache=True, nogil=True)
def predict_sum(Q, feature, threshold, left, right, value, n_est, node_off, out_sum, out_cnt):
    """Accumulate leaf values and nonempty-leaf counts over trees for rows of ``Q``."""
    n_trees = node_off.shape[0] - 1
    for b in range(n_trees):
        off = node_off[b]
        for r in range(Q.shape[0]):
            leaf = find_leaf(Q, r, feature, threshold, left, right, off)
            if n_est[off + leaf] > 0:
                out_sum[r] += value[off + leaf]
                out_cnt[r] += 1


@njit(cache=True, nogil=True)
def predict_oob_sum(X, rows, feature, threshold, left, right, value, n_est, node_off,
                    inbag, out_sum, out_cnt):
    """Like :func:`predict_sum` but tree ``b`` only counts for rows not in ``inbag[b]``.

    ``rows[r]`` is the training index of ``X[r]``.
    """
    n_trees = node_off.shape[0] - 1
    for b in range(n_trees):
        off = node_off[b]
        for r in range(X.shape[0]):
            if inbag[b, rows[r]]:
                continue
            leaf = find_leaf(X, r, feature, threshold, left, right, off)
            if n_est[off + leaf] > 0:
                out_sum[r] += value[off + leaf]
                out_cnt[r] += 1


@njit(cache=True, nogil=True)
def weights_stored(Q, feature, threshold, left, right, n_est, node_off, member_start,
                   members, member_off, W, cnt):
    """Accumulate un-normalised forest weights over the stored leaf members."""
    n_trees = node_off.shape[0] - 1
    for b in range(n_trees):
        off = node_off[b]
        moff = member_off[b]
        for r in range(Q.shape[0]):
            leaf = find_leaf(Q, r, feature, threshold, left, right, off)
            c = n_est[off + leaf]
            if c == 0:
                continue
            cnt[r] += 1
            share = 1.0 / c
            s = moff + member_start[off + leaf]
            for a in range(s, s + c):
                W[r, members[a]] += share


@njit(cache=True, nogil=True)
def leaf_ids(X, feature, threshold, left, right, node_off):
    """Leaf (local node id) of every row of ``X`` in every tree, shape (B, n)."""
    n_trees = node_off.shape[0] - 1
    out = np.empty((n_trees, X.shape[0]), dtype=np.int32)
    for b in range(n_trees):
        off = node_off[b]
        for r in range(X.shape[0]):
            out[b, r] = find_leaf(X, r, feature, threshold, left, right, off)
    return out


@njit(cache=True, nogil=True)
def weights_external(Q, feature, threshold, left, right, node_off, target_leaves, W, cnt):
    """Accumulate un-normalised weights over external rows with known leaves."""
    n_trees = node_off.shape[0] - 1
    n_t = target_leaves.shape[1]
    for b in range(n_trees):
        off = node_off[b]
        n_nodes = node_off[b + 1] - off
        sizes = np.zeros(n_nodes, dtype=np.int64)
        for i in range(n_t):
            sizes[target_leaves[b, i]] += 1
        for r in range(Q.shape[0]):
            leaf = find_leaf(Q, r, feature, threshold, left, right, off)
            c = sizes[leaf]
            if c == 0:
                continue
            cnt[r] += 1
            share = 1.0 / c
            for i in range(n_t):
                if target_leaves[b, i] == leaf:
                    W[r, i] += share


@njit(cache=True, nogil=True)
def repopulate(X, y, feature, threshold, left, right, node_off):
    """Refill every leaf from the rows of ``(X, y)``.

    Returns ``(value, n_est, member_start, members, member_off)`` in the same
    layout that :func:`build_tree` produces, member ids indexing rows of ``X``.
    """
    n_trees = node_off.shape[0] - 1
    n_nodes_total = node_off[n_trees]
    n = X.shape[0]
    value = np.full(n_nodes_total, np.nan)
    n_est = np.zeros(n_nodes_total, dtype=np.int32)
    member_start = np.zeros(n_nodes_total, dtype=np.int32)
    members = np.empty(n_trees * n, dtype=np.int32)
    member_off = np.empty(n_trees + 1, dtype=np.int64)
    leaf = np.empty(n, dtype=np.int64)
    for b in range(n_trees):
        off = node_off[b]
        n_nodes = node_off[b + 1] - off
        member_off[b] = b * n
        sums = np.zeros(n_nodes)
        counts = np.zeros(n_nodes, dtype=np.int64)
        for r in range(n):
            lf = find_leaf(X, r, feature, threshold, left, right, off)
            leaf[r] = lf
            counts[lf] += 1
            sums[lf] += y[r]
        pos = 0
        fill = np.zeros(n_nodes, dtype=np.int64)
        for node in range(n_nodes):
            if left[off + node] < 0:
                member_start[off + node] = pos
                n_est[off + node] = counts[node]
                if counts[node] > 0:
                    value[off + node] = sums[node] / counts[node]
                fill[node] = pos
                pos += counts[node]
        for r in range(n):
            lf = leaf[r]
            members[b * n + fill[lf]] = r
            fill[lf] += 1
    member_off[n_trees] = n_trees * n
    return value, n_est, member_start, members, member_off
