"""Compiled kernels for growing and evaluating trees on CSR binary data.

A split on feature ``f`` sends rows with ``f == 1`` to the right child. The
node impurity is ``scale * weighted_variance(target)``; with 0/1 targets and
``scale=2`` that is exactly the Gini index ``2q(1-q)``.
"""

import numpy as np
from numba import njit

GAIN_EPS = 1e-12
PURE_EPS = 1e-14


@njit(cache=True, inline="always")
def _splitmix(state):
    z = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _has_feature(indices, lo, hi, f):
    while lo < hi:
        mid = (lo + hi) >> 1
        v = indices[mid]
        if v == f:
            return True
        if v < f:
            lo = mid + 1
        else:
            hi = mid
    return False


@njit(cache=True, nogil=True)
def grow_tree(indptr, indices, n_features, rows, weight, target,
              max_depth, min_samples_split, max_features, scale, seed):
    """Grow one tree over sample entries ``rows`` (duplicates allowed).

    Returns (feature, left, right, value, impurity, node_weight, n_nodes).
    ``max_depth < 0`` means unlimited; ``max_features >= n_features`` means
    every non-constant feature is a candidate.
    """
    n = rows.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int32)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros(cap, np.float64)
    impurity = np.zeros(cap, np.float64)
    node_w = np.zeros(cap, np.float64)

    perm = np.arange(n)
    # per-feature accumulators (count, weight, weighted target), lazily reset via ``stamp``
    stamp = np.full(n_features, -1, np.int64)
    c1 = np.zeros(n_features, np.int64)
    acc = np.zeros((n_features, 2), np.float64)
    touched = np.empty(n_features, np.int64)
    cand = np.empty(n_features, np.int64)

    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    rng = _splitmix(np.uint64(seed))

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]

        W = 0.0
        S = 0.0
        SS = 0.0
        for p in range(lo, hi):
            e = perm[p]
            w = weight[e]
            y = target[e]
            W += w
            S += w * y
            SS += w * y * y
        mean = S / W
        imp = scale * (SS / W - mean * mean)
        if imp < 0.0:
            imp = 0.0
        value[node] = mean
        impurity[node] = imp
        node_w[node] = W

        if (max_depth >= 0 and depth >= max_depth) or (hi - lo) < min_samples_split or imp <= PURE_EPS:
            continue

        n_touched = 0
        for p in range(lo, hi):
            e = perm[p]
            r = rows[e]
            w = weight[e]
            wy = w * target[e]
            for q in range(indptr[r], indptr[r + 1]):
                f = indices[q]
                if stamp[f] != node:
                    stamp[f] = node
                    c1[f] = 0
                    acc[f, 0] = 0.0
                    acc[f, 1] = 0.0
                    touched[n_touched] = f
                    n_touched += 1
                c1[f] += 1
                acc[f, 0] += w
                acc[f, 1] += wy

        n_cand = 0
        size = hi - lo
        for i in range(n_touched):
            f = touched[i]
            if c1[f] < size:
                cand[n_cand] = f
                n_cand += 1
        if n_cand == 0:
            continue

        m = n_cand
        if max_features < n_cand:
            m = max_features
            # partial Fisher-Yates: first m slots become a uniform random subset
            for i in range(m):
                rng = _splitmix(rng)
                j = i + np.int64(rng % np.uint64(n_cand - i))
                tmp = cand[i]
                cand[i] = cand[j]
                cand[j] = tmp

        # impurity decrease = scale * (S_L^2/W_L + S_R^2/W_R - S^2/W) / W
        base = S * S / W
        best_gain = GAIN_EPS
        best_f = -1
        for i in range(m):
            f = cand[i]
            WR = acc[f, 0]
            WL = W - WR
            if WR <= 0.0 or WL <= 0.0:
                continue
            SR = acc[f, 1]
            SL = S - SR
            gain = scale * (SL * SL / WL + SR * SR / WR - base) / W
            if gain > best_gain or (gain == best_gain and best_f >= 0 and f < best_f):
                best_gain = gain
                best_f = f
        if best_f < 0:
            continue

        # partition perm[lo:hi]: rows lacking best_f first
        i = lo
        j = hi - 1
        while i <= j:
            r = rows[perm[i]]
            if _has_feature(indices, indptr[r], indptr[r + 1], best_f):
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
                j -= 1
            else:
                i += 1
        mid = i

        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        left[node] = li
        right[node] = ri
        # push right first so the left subtree is grown first
        st_node[sp] = ri
        st_lo[sp] = mid
        st_hi[sp] = hi
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = li
        st_lo[sp] = lo
        st_hi[sp] = mid
        st_depth[sp] = depth + 1
        sp += 1

    return (feature[:n_nodes].copy(), left[:n_nodes].copy(), right[:n_nodes].copy(),
            value[:n_nodes].copy(), impurity[:n_nodes].copy(), node_w[:n_nodes].copy(),
            n_nodes)


@njit(cache=True, nogil=True)
def apply_trees(indptr, indices, offsets, feature, left, right, value, n_features):
    """Leaf value of every row under every tree: returns n_rows x n_trees."""
    n_rows = indptr.shape[0] - 1
    n_trees = offsets.shape[0] - 1
    out = np.empty((n_rows, n_trees), np.float64)
    active = np.zeros(n_features, np.bool_)
    for r in range(n_rows):
        lo = indptr[r]
        hi = indptr[r + 1]
        for q in range(lo, hi):
            active[indices[q]] = True
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if active[feature[base + node]]:
                    node = right[base + node]
                else:
                    node = left[base + node]
            out[r, t] = value[base + node]
        for q in range(lo, hi):
            active[indices[q]] = False
    return out


@njit(cache=True, inline="always")
def _below(state, m):
    """Uniform integer in [0, m) from a 64-bit state (53-bit float scaling)."""
    return np.int64((state >> np.uint64(11)) * (1.0 / 9007199254740992.0) * m)


@njit(cache=True, nogil=True)
def grow_forest(indptr, indices, n_features, minority, majority, labels,
                n_trees, root_seed, max_depth, min_samples_split, max_features):
    """Balanced-bootstrap Gini trees, concatenated with per-tree node offsets.

    Tree ``i`` draws from its own stream seeded by ``(root_seed, i)``, so a
    tree never depends on how many trees came before it.
    """
    m = minority.shape[0]
    rows = np.empty(2 * m, np.int64)
    w = np.ones(2 * m, np.float64)
    y = np.empty(2 * m, np.float64)
    offsets = np.zeros(n_trees + 1, np.int64)
    cap = n_trees * (4 * m + 1)
    feature = np.empty(cap, np.int32)
    left = np.empty(cap, np.int32)
    right = np.empty(cap, np.int32)
    value = np.empty(cap, np.float64)
    impurity = np.empty(cap, np.float64)
    node_w = np.empty(cap, np.float64)
    root = _splitmix(np.uint64(root_seed))
    for t in range(n_trees):
        state = _splitmix(root ^ _splitmix(np.uint64(t) + np.uint64(0x632BE59BD9B4E019)))
        for i in range(m):
            state = _splitmix(state)
            rows[i] = minority[_below(state, m)]
        for i in range(m):
            state = _splitmix(state)
            rows[m + i] = majority[_below(state, majority.shape[0])]
        for i in range(2 * m):
            y[i] = labels[rows[i]]
        state = _splitmix(state)
        f, l, r, v, imp, nw, n_nodes = grow_tree(
            indptr, indices, n_features, rows, w, y, max_depth,
            min_samples_split, max_features, 2.0, state)
        o = offsets[t]
        feature[o:o + n_nodes] = f
        left[o:o + n_nodes] = l
        right[o:o + n_nodes] = r
        value[o:o + n_nodes] = v
        impurity[o:o + n_nodes] = imp
        node_w[o:o + n_nodes] = nw
        offsets[t + 1] = o + n_nodes
    end = offsets[n_trees]
    return (offsets, feature[:end].copy(), left[:end].copy(), right[:end].copy(),
            value[:end].copy(), impurity[:end].copy(), node_w[:end].copy())
