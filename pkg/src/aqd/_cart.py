"""Exact-split CART regression kernels.

Trees are grown from presorted row lists: one argsort per feature for the
whole forest, filtered per tree to the bootstrap support and partitioned in
place at every split. No re-sorting happens inside a node, which keeps the
kernel O(rows * features) per tree level.

All randomness (bootstrap draws, per-node feature sampling) comes from an
in-kernel splitmix64 stream seeded per tree, so results are bit-identical
regardless of how trees are scheduled across workers.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / float(1 << 53)


def seed_stream(master_seed, count):
    """First `count` outputs of a splitmix64 stream, as Python ints."""
    mask = (1 << 64) - 1
    state = master_seed & mask
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        z = z ^ (z >> 31)
        out.append(z)
    return out


@njit(cache=True, nogil=True)
def _next_u64(state):
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return state, z


@njit(cache=True, nogil=True)
def _next_unit(state):
    state, z = _next_u64(state)
    return state, float(z >> _S11) * _INV53


@njit(cache=True, nogil=True)
def grow_tree(X, y, order, tree_seed, mtry, min_leaf, max_depth, bootstrap,
              sse_tol, feature_out, threshold_out, left_out, right_out,
              value_out, count_out, imp_out):
    """Grow one tree; returns the number of nodes written.

    Output arrays must be preallocated with capacity 2*n + 1. Node ids are
    assigned parent-before-children with left < right, and the DFS visits
    the left child first, so the layout is schedule-independent.
    """
    n, p = X.shape
    state = tree_seed

    w = np.zeros(n, dtype=np.int64)
    if bootstrap:
        for _ in range(n):
            state, u = _next_unit(state)
            idx = int(u * n)
            if idx >= n:
                idx = n - 1
            w[idx] += 1
    else:
        for i in range(n):
            w[i] = 1

    m = 0
    for i in range(n):
        if w[i] > 0:
            m += 1

    lists = np.empty((p, m), dtype=np.int64)
    for f in range(p):
        k = 0
        for j in range(n):
            r = order[f, j]
            if w[r] > 0:
                lists[f, k] = r
                k += 1

    tmp = np.empty(m, dtype=np.int64)
    side = np.zeros(n, dtype=np.uint8)
    perm = np.empty(p, dtype=np.int64)

    cap = 2 * m + 2
    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    sp = 0
    stack_node[sp] = 0
    stack_lo[sp] = 0
    stack_hi[sp] = m
    stack_depth[sp] = 0
    sp += 1
    node_count = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]

        W = 0
        S = 0.0
        SS = 0.0
        for k in range(lo, hi):
            r = lists[0, k]
            wi = w[r]
            v = y[r]
            W += wi
            S += wi * v
            SS += wi * v * v
        mean = S / W

        feature_out[node] = -1
        threshold_out[node] = 0.0
        left_out[node] = -1
        right_out[node] = -1
        value_out[node] = mean
        count_out[node] = W

        if W < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        node_sse = SS - S * mean
        if node_sse <= sse_tol * W:
            continue

        if mtry >= p:
            n_cand = p
            for i in range(p):
                perm[i] = i
        else:
            n_cand = mtry
            for i in range(p):
                perm[i] = i
            for j in range(mtry):
                state, u = _next_unit(state)
                pick = j + int(u * (p - j))
                if pick >= p:
                    pick = p - 1
                t = perm[j]
                perm[j] = perm[pick]
                perm[pick] = t
            # ascending candidate order fixes the tie-break to lowest index
            for i in range(1, mtry):
                key = perm[i]
                j = i - 1
                while j >= 0 and perm[j] > key:
                    perm[j + 1] = perm[j]
                    j -= 1
                perm[j + 1] = key

        base = S * S / W
        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for ci in range(n_cand):
            f = perm[ci]
            wl = 0
            sl = 0.0
            prev_x = X[lists[f, lo], f]
            for k in range(lo, hi):
                r = lists[f, k]
                xv = X[r, f]
                if xv > prev_x:
                    wr = W - wl
                    if wl >= min_leaf and wr >= min_leaf:
                        sr = S - sl
                        gain = sl * sl / wl + sr * sr / wr - base
                        if gain > best_gain:
                            thr = 0.5 * (prev_x + xv)
                            if thr >= xv:
                                thr = prev_x
                            best_gain = gain
                            best_f = f
                            best_thr = thr
                    prev_x = xv
                wl += w[r]
                sl += w[r] * y[r]

        if best_f < 0:
            continue

        imp_out[best_f] += best_gain

        n_left = 0
        for k in range(lo, hi):
            r = lists[0, k]
            if X[r, best_f] <= best_thr:
                side[r] = 1
                n_left += 1
            else:
                side[r] = 0
        for f in range(p):
            a = 0
            b = 0
            for k in range(lo, hi):
                r = lists[f, k]
                if side[r] == 1:
                    lists[f, lo + a] = r
                    a += 1
                else:
                    tmp[b] = r
                    b += 1
            for k in range(b):
                lists[f, lo + a + k] = tmp[k]
        mid = lo + n_left

        left_id = node_count
        right_id = node_count + 1
        node_count += 2
        feature_out[node] = best_f
        threshold_out[node] = best_thr
        left_out[node] = left_id
        right_out[node] = right_id

        stack_node[sp] = right_id
        stack_lo[sp] = mid
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = left_id
        stack_lo[sp] = lo
        stack_hi[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1

    return node_count


@njit(cache=True, nogil=True)
def accumulate_tree_predictions(feature, threshold, left, right, value, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]
