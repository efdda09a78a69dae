# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Level-wise best-split search for least-squares regression trees.

Keep the arithmetic in step with ``_split_py.find_best_splits``: both must
return bit-identical results.
"""

import numpy as np


def find_best_splits(
    const double[:, ::1] X,
    const Py_ssize_t[:, ::1] order,
    const double[::1] resid,
    const int[::1] node_of,
    Py_ssize_t n_nodes,
    Py_ssize_t min_leaf,
    const Py_ssize_t[::1] features,
):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i, j, k, f, fi, nl, nr
    cdef double v, sl, sr, gain

    tot_sum_a = np.zeros(n_nodes, dtype=np.float64)
    tot_cnt_a = np.zeros(n_nodes, dtype=np.intp)
    best_gain_a = np.zeros(n_nodes, dtype=np.float64)
    best_feat_a = np.full(n_nodes, -1, dtype=np.intp)
    best_thr_a = np.zeros(n_nodes, dtype=np.float64)
    best_left_a = np.zeros(n_nodes, dtype=np.intp)
    left_sum_a = np.zeros(n_nodes, dtype=np.float64)
    left_cnt_a = np.zeros(n_nodes, dtype=np.intp)
    last_a = np.zeros(n_nodes, dtype=np.float64)

    cdef double[::1] tot_sum = tot_sum_a
    cdef Py_ssize_t[::1] tot_cnt = tot_cnt_a
    cdef double[::1] best_gain = best_gain_a
    cdef Py_ssize_t[::1] best_feat = best_feat_a
    cdef double[::1] best_thr = best_thr_a
    cdef Py_ssize_t[::1] best_left = best_left_a
    cdef double[::1] left_sum = left_sum_a
    cdef Py_ssize_t[::1] left_cnt = left_cnt_a
    cdef double[::1] last = last_a

    with nogil:
        for i in range(n):
            k = node_of[i]
            if k >= 0:
                tot_sum[k] += resid[i]
                tot_cnt[k] += 1

        for fi in range(features.shape[0]):
            f = features[fi]
            for k in range(n_nodes):
                left_sum[k] = 0.0
                left_cnt[k] = 0
            for j in range(n):
                i = order[f, j]
                k = node_of[i]
                if k < 0:
                    continue
                v = X[i, f]
                nl = left_cnt[k]
                if nl > 0 and v != last[k]:
                    nr = tot_cnt[k] - nl
                    if nl >= min_leaf and nr >= min_leaf:
                        sl = left_sum[k]
                        sr = tot_sum[k] - sl
                        gain = sl * sl / nl + sr * sr / nr - tot_sum[k] * tot_sum[k] / tot_cnt[k]
                        if gain > best_gain[k]:
                            best_gain[k] = gain
                            best_feat[k] = f
                            best_left[k] = nl
                            best_thr[k] = 0.5 * (last[k] + v)
                            if best_thr[k] >= v:
                                best_thr[k] = last[k]
                left_sum[k] += resid[i]
                left_cnt[k] += 1
                last[k] = v

    return best_feat_a, best_thr_a, best_gain_a, best_left_a
