"""Pure numpy twin of the compiled split search in ``_split.pyx``."""

import numpy as np


def find_best_splits(X, order, resid, node_of, n_nodes, min_leaf, features):
    n_nodes = int(n_nodes)
    valid = node_of >= 0
    tot_sum = np.bincount(node_of[valid], weights=resid[valid], minlength=n_nodes)
    tot_cnt = np.bincount(node_of[valid], minlength=n_nodes)
    best_gain = np.zeros(n_nodes)
    best_feat = np.full(n_nodes, -1, dtype=np.intp)
    best_thr = np.zeros(n_nodes)
    best_left = np.zeros(n_nodes, dtype=np.intp)

    for f in features:
        ordf = order[f]
        nodes = node_of[ordf]
        keep = nodes >= 0
        ordf, nodes = ordf[keep], nodes[keep]
        by_node = np.argsort(nodes, kind="stable")
        ordf, nodes = ordf[by_node], nodes[by_node]
        bounds = np.flatnonzero(np.diff(nodes)) + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [nodes.size]))
        for s, e in zip(starts, ends):
            if e - s < 2:
                continue
            k = nodes[s]
            idx = ordf[s:e]
            vals = X[idx, f]
            cs = np.cumsum(resid[idx])
            total, count = tot_sum[k], tot_cnt[k]
            nl = np.arange(1, e - s)
            cand = vals[1:] != vals[:-1]
            cand &= (nl >= min_leaf) & (count - nl >= min_leaf)
            if not cand.any():
                continue
            nl = nl[cand]
            nr = count - nl
            sl = cs[:-1][cand]
            sr = total - sl
            gain = sl * sl / nl + sr * sr / nr - total * total / count
            j = int(np.argmax(gain))
            if gain[j] > best_gain[k]:
                best_gain[k] = gain[j]
                best_feat[k] = f
                best_left[k] = nl[j]
                pos = np.flatnonzero(cand)[j]
                lo, hi = vals[pos], vals[pos + 1]
                thr = 0.5 * (lo + hi)
                best_thr[k] = lo if thr >= hi else thr
    return best_feat, best_thr, best_gain, best_left
