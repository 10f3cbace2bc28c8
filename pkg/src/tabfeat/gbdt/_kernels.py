"""Compiled routines for growing and evaluating one regression tree.

Binned data is laid out as (n_features, n_rows).  Histograms hold gradient
sums, hessian sums and counts per (feature, bin); the last bin of every
feature is the missing bin.  Trees grow leaf-wise: the leaf with the largest
split gain is split next until ``max_leaves`` is reached or no split has
positive gain.  The sibling histogram is obtained by subtraction.
"""
import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def build_histogram(binned, grad, hess, rows, start, end, hg, hh, hc):
    n_features, n_bins = hg.shape
    for f in range(n_features):
        for b in range(n_bins):
            hg[f, b] = 0.0
            hh[f, b] = 0.0
            hc[f, b] = 0
        col = binned[f]
        for i in range(start, end):
            r = rows[i]
            b = col[r]
            hg[f, b] += grad[r]
            hh[f, b] += hess[r]
            hc[f, b] += 1


@njit(nogil=True, cache=True)
def _split_gain(gl, hl, cl, gr, hr, cr, parent, lam, min_child, min_hess):
    if cl < min_child or cr < min_child or hl < min_hess or hr < min_hess:
        return -1.0
    return gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent


@njit(nogil=True, cache=True)
def find_best_split(hg, hh, hc, n_bins, is_cat, G, H, C, lam, min_child, min_hess,
                    cat_mask_out):
    """Best split of one leaf.

    Returns (gain, feature, threshold_bin, missing_left, is_categorical).  For
    categorical winners ``cat_mask_out`` marks the bins sent left.
    """
    n_features, width = hg.shape
    mb = width - 1
    parent = G * G / (H + lam)
    best_gain = 0.0
    best_f = -1
    best_t = -1
    best_ml = True
    best_cat = False
    ratio = np.empty(width, dtype=np.float64)
    order = np.empty(width, dtype=np.int64)
    for f in range(n_features):
        nb = n_bins[f]
        mg = hg[f, mb]
        mh = hh[f, mb]
        mc = hc[f, mb]
        if nb == 0 or (nb == 1 and mc == 0):
            continue
        if not is_cat[f]:
            gl = 0.0
            hl = 0.0
            cl = 0
            for t in range(nb):
                gl += hg[f, t]
                hl += hh[f, t]
                cl += hc[f, t]
                g_right = _split_gain(gl, hl, cl, G - gl, H - hl, C - cl,
                                      parent, lam, min_child, min_hess)
                if mc > 0:
                    g_left = _split_gain(gl + mg, hl + mh, cl + mc, G - gl - mg,
                                         H - hl - mh, C - cl - mc,
                                         parent, lam, min_child, min_hess)
                else:
                    g_left = g_right
                if g_left >= g_right:
                    gain = g_left
                    ml = True
                else:
                    gain = g_right
                    ml = False
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_t = t
                    best_ml = ml
                    best_cat = False
        else:
            m = 0
            for b in range(nb):
                if hc[f, b] > 0:
                    order[m] = b
                    h = hh[f, b]
                    ratio[m] = hg[f, b] / h if h > 0 else 0.0
                    m += 1
            if m == 0:
                continue
            perm = np.argsort(ratio[:m], kind="mergesort")
            sorted_bins = order[:m][perm]
            gl = 0.0
            hl = 0.0
            cl = 0
            for k in range(m):
                b = sorted_bins[k]
                gl += hg[f, b]
                hl += hh[f, b]
                cl += hc[f, b]
                g_right = _split_gain(gl, hl, cl, G - gl, H - hl, C - cl,
                                      parent, lam, min_child, min_hess)
                if mc > 0:
                    g_left = _split_gain(gl + mg, hl + mh, cl + mc, G - gl - mg,
                                         H - hl - mh, C - cl - mc,
                                         parent, lam, min_child, min_hess)
                else:
                    g_left = g_right
                if g_left >= g_right:
                    gain = g_left
                    ml = True
                else:
                    gain = g_right
                    ml = False
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_t = k
                    best_ml = ml
                    best_cat = True
                    for j in range(width):
                        cat_mask_out[j] = False
                    for j in range(k + 1):
                        cat_mask_out[sorted_bins[j]] = True
    return best_gain, best_f, best_t, best_ml, best_cat


@njit(nogil=True, cache=True)
def _goes_left(b, mb, thr, ml, is_cat, mask):
    if b == mb:
        return ml
    if is_cat:
        return mask[b]
    return b <= thr


@njit(nogil=True, cache=True)
def grow_tree(binned, grad, hess, rows_in, n_bins, is_cat, max_leaves, min_child,
              lam, min_hess, learning_rate, hg, hh, hc):
    """Grow one tree on ``rows_in``.

    ``hg``/``hh``/``hc`` are scratch histograms of shape
    (max_leaves, n_features, n_bins + 1).  Returns the node arrays, the
    number of nodes and the shrunken leaf value of every row in ``rows_in``
    (indexed by row id, zero elsewhere).
    """
    n_rows = rows_in.shape[0]
    n_features = binned.shape[0]
    width = hg.shape[2]
    mb = width - 1
    rows = rows_in.copy()
    buf = np.empty(n_rows, dtype=np.int64)
    max_nodes = 2 * max_leaves - 1

    feat = np.full(max_nodes, -1, dtype=np.int64)
    thr = np.zeros(max_nodes, dtype=np.int64)
    miss_left = np.zeros(max_nodes, dtype=np.bool_)
    cat_node = np.zeros(max_nodes, dtype=np.bool_)
    cat_mask = np.zeros((max_nodes, width), dtype=np.bool_)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes, dtype=np.float64)
    gain = np.zeros(max_nodes, dtype=np.float64)

    l_node = np.zeros(max_leaves, dtype=np.int64)
    l_start = np.zeros(max_leaves, dtype=np.int64)
    l_end = np.zeros(max_leaves, dtype=np.int64)
    l_g = np.zeros(max_leaves)
    l_h = np.zeros(max_leaves)
    l_c = np.zeros(max_leaves, dtype=np.int64)
    b_gain = np.zeros(max_leaves)
    b_f = np.zeros(max_leaves, dtype=np.int64)
    b_t = np.zeros(max_leaves, dtype=np.int64)
    b_ml = np.zeros(max_leaves, dtype=np.bool_)
    b_cat = np.zeros(max_leaves, dtype=np.bool_)
    b_mask = np.zeros((max_leaves, width), dtype=np.bool_)

    G = 0.0
    H = 0.0
    for i in range(n_rows):
        G += grad[rows[i]]
        H += hess[rows[i]]
    l_g[0] = G
    l_h[0] = H
    l_c[0] = n_rows
    l_end[0] = n_rows
    build_histogram(binned, grad, hess, rows, 0, n_rows, hg[0], hh[0], hc[0])
    r = find_best_split(hg[0], hh[0], hc[0], n_bins, is_cat, G, H, n_rows, lam,
                        min_child, min_hess, b_mask[0])
    b_gain[0], b_f[0], b_t[0], b_ml[0], b_cat[0] = r
    n_leaves = 1
    n_nodes = 1

    while n_leaves < max_leaves:
        s = -1
        best = 0.0
        for j in range(n_leaves):
            if b_gain[j] > best:
                best = b_gain[j]
                s = j
        if s < 0:
            break
        f = b_f[s]
        t = b_t[s]
        ml = b_ml[s]
        ic = b_cat[s]
        node = l_node[s]
        feat[node] = f
        thr[node] = t
        miss_left[node] = ml
        cat_node[node] = ic
        for j in range(width):
            cat_mask[node, j] = b_mask[s, j]
        gain[node] = b_gain[s]

        start = l_start[s]
        end = l_end[s]
        col = binned[f]
        mask = b_mask[s]
        nl = 0
        nr = 0
        gl = 0.0
        hl = 0.0
        # branch-free partition: write to both sides, advance one
        for i in range(start, end):
            rid = rows[i]
            go = _goes_left(col[rid], mb, t, ml, ic, mask)
            rows[start + nl] = rid
            buf[nr] = rid
            nl += go
            nr += 1 - go
        for i in range(start, start + nl):
            rid = rows[i]
            gl += grad[rid]
            hl += hess[rid]
        for i in range(nr):
            rows[start + nl + i] = buf[i]

        ln = n_nodes
        rn = n_nodes + 1
        n_nodes += 2
        left[node] = ln
        right[node] = rn

        gr = l_g[s] - gl
        hr = l_h[s] - hl
        new = n_leaves
        n_leaves += 1
        # smaller child gets a fresh histogram, larger one inherits by subtraction
        if nl <= nr:
            small, large = new, s
            s_node, s_start, s_end, s_g, s_h, s_c = ln, start, start + nl, gl, hl, nl
            g_node, g_start, g_end, g_g, g_h, g_c = rn, start + nl, end, gr, hr, nr
        else:
            small, large = new, s
            s_node, s_start, s_end, s_g, s_h, s_c = rn, start + nl, end, gr, hr, nr
            g_node, g_start, g_end, g_g, g_h, g_c = ln, start, start + nl, gl, hl, nl
        build_histogram(binned, grad, hess, rows, s_start, s_end,
                        hg[small], hh[small], hc[small])
        for ff in range(n_features):
            for b in range(width):
                hg[large, ff, b] -= hg[small, ff, b]
                hh[large, ff, b] -= hh[small, ff, b]
                hc[large, ff, b] -= hc[small, ff, b]
        l_node[small] = s_node
        l_start[small] = s_start
        l_end[small] = s_end
        l_g[small] = s_g
        l_h[small] = s_h
        l_c[small] = s_c
        l_node[large] = g_node
        l_start[large] = g_start
        l_end[large] = g_end
        l_g[large] = g_g
        l_h[large] = g_h
        l_c[large] = g_c
        for j in (small, large):
            r = find_best_split(hg[j], hh[j], hc[j], n_bins, is_cat, l_g[j], l_h[j],
                                l_c[j], lam, min_child, min_hess, b_mask[j])
            b_gain[j], b_f[j], b_t[j], b_ml[j], b_cat[j] = r

    row_values = np.zeros(binned.shape[1], dtype=np.float64)
    for j in range(n_leaves):
        v = -l_g[j] / (l_h[j] + lam) * learning_rate
        value[l_node[j]] = v
        for i in range(l_start[j], l_end[j]):
            row_values[rows[i]] = v
    return (feat[:n_nodes], thr[:n_nodes], miss_left[:n_nodes], cat_node[:n_nodes],
            cat_mask[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes],
            gain[:n_nodes], row_values)


@njit(nogil=True, cache=True)
def predict_tree(binned, feat, thr, miss_left, cat_node, cat_mask, left, right, value,
                 missing_bin, out):
    """Add the tree's leaf value for every column of ``binned`` into ``out``."""
    n = binned.shape[1]
    for i in range(n):
        node = 0
        while left[node] >= 0:
            b = binned[feat[node], i]
            if _goes_left(b, missing_bin, thr[node], miss_left[node], cat_node[node],
                          cat_mask[node]):
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


@njit(nogil=True, cache=True)
def leaf_index(binned, feat, thr, miss_left, cat_node, cat_mask, left, right,
               missing_bin, out):
    n = binned.shape[1]
    for i in range(n):
        node = 0
        while left[node] >= 0:
            b = binned[feat[node], i]
            if _goes_left(b, missing_bin, thr[node], miss_left[node], cat_node[node],
                          cat_mask[node]):
                node = left[node]
            else:
                node = right[node]
        out[i] = node
