"""numba kernels for growing and evaluating Gini decision trees."""

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def _next(state):
    # splitmix64
    state[0] = state[0] + np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(nogil=True, cache=True)
def _randint(state, n):
    u = np.float64(_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    r = np.int64(u * n)
    return r if r < n else n - 1


@njit(nogil=True, cache=True)
def grow_tree(X, y, presorted, weight, mtry, min_leaf, max_depth, seed):
    """Grow one tree on a bootstrap sample given as per-row multiplicities.

    ``presorted[:, f]`` orders all rows by feature ``f``; rows with zero weight
    are dropped. Every node owns one contiguous segment of each per-feature
    order, and a split stably partitions all of them, so no node ever sorts.

    Returns (feature, threshold, left, right, count0, count1) where counts are
    bootstrap-weighted; leaves have feature == -1. ``max_depth < 0`` means
    unlimited.
    """
    n_all, p = X.shape
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed) ^ np.uint64(0x5DEECE66D)

    u = 0
    for i in range(n_all):
        if weight[i] > 0:
            u += 1
    order = np.empty((p, u), dtype=np.int64)
    for f in range(p):
        k = 0
        for j in range(n_all):
            r = presorted[j, f]
            if weight[r] > 0:
                order[f, k] = r
                k += 1

    cap = 2 * u + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    count0 = np.zeros(cap, dtype=np.int64)
    count1 = np.zeros(cap, dtype=np.int64)

    goes_left = np.zeros(n_all, dtype=np.bool_)
    buf = np.empty(u, dtype=np.int64)
    feats = np.arange(p)

    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = u
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        c0 = 0
        c1 = 0
        for i in range(lo, hi):
            r = order[0, i]
            if y[r] == 1:
                c1 += weight[r]
            else:
                c0 += weight[r]
        count0[node] = c0
        count1[node] = c1
        m = c0 + c1
        if c0 == 0 or c1 == 0 or m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        best_score = -1.0
        best_f = -1
        best_thr = 0.0
        tried = 0
        # partial Fisher-Yates; keep drawing past mtry until a valid split exists
        for j in range(p):
            if tried >= mtry and best_f >= 0:
                break
            r = j + _randint(state, p - j)
            tmp = feats[j]
            feats[j] = feats[r]
            feats[r] = tmp
            f = feats[j]
            tried += 1
            l0 = 0
            l1 = 0
            for i in range(lo, hi - 1):
                row = order[f, i]
                if y[row] == 1:
                    l1 += weight[row]
                else:
                    l0 += weight[row]
                nl = l0 + l1
                nr = m - nl
                if nl < min_leaf:
                    continue
                if nr < min_leaf:
                    break
                a = X[row, f]
                b = X[order[f, i + 1], f]
                if not a < b:
                    continue
                r0 = c0 - l0
                r1 = c1 - l1
                score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr
                if score > best_score or (score == best_score and f < best_f):
                    thr = 0.5 * (a + b)
                    if not thr < b:
                        thr = a
                    best_score = score
                    best_f = f
                    best_thr = thr
        if best_f < 0:
            continue

        n_left = 0
        for i in range(lo, hi):
            row = order[best_f, i]
            gl = X[row, best_f] <= best_thr
            goes_left[row] = gl
            if gl:
                n_left += 1
        mid = lo + n_left
        for g in range(p):
            a = lo
            b = 0
            for i in range(lo, hi):
                row = order[g, i]
                if goes_left[row]:
                    order[g, a] = row
                    a += 1
                else:
                    buf[b] = row
                    b += 1
            for i in range(b):
                order[g, mid + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        st_node[top] = n_nodes + 1
        st_lo[top] = mid
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = n_nodes
        st_lo[top] = lo
        st_hi[top] = mid
        st_depth[top] = depth + 1
        top += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        count0[:n_nodes].copy(),
        count1[:n_nodes].copy(),
    )


@njit(nogil=True, cache=True)
def bootstrap_weights(seed, n):
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    w = np.zeros(n, dtype=np.int64)
    for _ in range(n):
        w[_randint(state, n)] += 1
    return w


@njit(nogil=True, cache=True)
def count_votes(X, offsets, feature, threshold, left, right, count0, count1):
    """Number of trees voting class 1 for every row of X."""
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    votes = np.zeros(n, dtype=np.int64)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            if count1[base + node] > count0[base + node]:
                votes[i] += 1
    return votes
