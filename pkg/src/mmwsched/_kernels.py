"""Compiled CART kernels.

Split quality is scored as sum_c L_c^2 / n_L + sum_c R_c^2 / n_R from integer
class counts (maximising it minimises size-weighted child Gini). Candidates
are visited feature by feature in the given order, thresholds ascending, and
only a strictly better score replaces the incumbent.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def midpoint(v0, v1):
    thr = 0.5 * (v0 + v1)
    if not thr < v1:
        thr = v0
    return thr


@njit(cache=True)
def split_search(X, y, idx, start, end, feats, n_feats, counts, n_classes, vals, left_c, right_c):
    """Best (feature, threshold, score) over samples idx[start:end]; feature -1 if none."""
    m = end - start
    best_f = -1
    best_thr = 0.0
    best_score = -1.0
    sr0 = 0
    for c in range(n_classes):
        sr0 += counts[c] * counts[c]
    for fi in range(n_feats):
        f = feats[fi]
        for i in range(m):
            vals[i] = X[idx[start + i], f]
        order = np.argsort(vals[:m], kind="mergesort")
        for c in range(n_classes):
            left_c[c] = 0
            right_c[c] = counts[c]
        sl = 0
        sr = sr0
        for p in range(m - 1):
            c = y[idx[start + order[p]]]
            sl += 2 * left_c[c] + 1
            left_c[c] += 1
            sr -= 2 * right_c[c] - 1
            right_c[c] -= 1
            v0 = vals[order[p]]
            v1 = vals[order[p + 1]]
            if v0 < v1:
                nl = p + 1
                nr = m - nl
                score = sl / nl + sr / nr
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_thr = midpoint(v0, v1)
    return best_f, best_thr, best_score


@njit(cache=True)
def reduces_impurity(X, y, idx, start, end, f, thr, n_classes, left_c, right_c):
    """True iff the split's children do not share the parent's class proportions."""
    for c in range(n_classes):
        left_c[c] = 0
        right_c[c] = 0
    for i in range(start, end):
        s = idx[i]
        if X[s, f] <= thr:
            left_c[y[s]] += 1
        else:
            right_c[y[s]] += 1
    nl = 0
    nr = 0
    for c in range(n_classes):
        nl += left_c[c]
        nr += right_c[c]
    if nl == 0 or nr == 0:
        return False
    for c in range(n_classes):
        if left_c[c] * nr != right_c[c] * nl:
            return True
    return False


@njit(cache=True)
def grow(X, y, n_classes, max_depth, min_samples_split, max_features, max_leaves, seed):
    """Depth-first CART growth. Returns trimmed node arrays.

    max_leaves <= 0 means unlimited. Any impure node with a valid threshold
    is split, even when the best split leaves the weighted Gini unchanged. A fresh feature subset of size
    max_features is drawn at every node by a partial Fisher-Yates shuffle.
    """
    np.random.seed(seed)
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, n_classes), np.int64)

    idx = np.arange(n)
    buf = np.empty(n, np.int64)
    perm = np.arange(d)
    vals = np.empty(n)
    left_c = np.zeros(n_classes, np.int64)
    right_c = np.zeros(n_classes, np.int64)
    k = min(max_features, d)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    leaves = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        m = end - start
        for i in range(start, end):
            counts[node, y[idx[i]]] += 1
        n_present = 0
        for c in range(n_classes):
            if counts[node, c] > 0:
                n_present += 1
        if depth >= max_depth or m < min_samples_split or n_present <= 1:
            continue
        if max_leaves > 0 and leaves >= max_leaves:
            continue

        for i in range(k):
            j = i + np.random.randint(0, d - i)
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp

        f, thr, score = split_search(X, y, idx, start, end, perm, k, counts[node], n_classes,
                                     vals, left_c, right_c)
        # zero-gain splits are kept (XOR-like structure needs them)
        if f < 0:
            continue

        # stable partition of idx[start:end]
        nl = 0
        for i in range(start, end):
            if X[idx[i], f] <= thr:
                buf[nl] = idx[i]
                nl += 1
        nr = nl
        for i in range(start, end):
            if not X[idx[i], f] <= thr:
                buf[nr] = idx[i]
                nr += 1
        for i in range(m):
            idx[start + i] = buf[i]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        leaves += 1
        feature[node] = f
        threshold[node] = thr
        left[node] = lid
        right[node] = rid
        # right pushed first so the left subtree is grown first
        st_node[sp] = rid
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lid
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy())


@njit(cache=True)
def apply(feature, threshold, left, right, X):
    """Leaf index reached by each row of X."""
    out = np.empty(X.shape[0], np.int64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out
