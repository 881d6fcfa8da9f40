"""Pure-Python kernels. Same signatures and loop order as ``_kernels.pyx``."""

import numpy as np

BACKEND = "python"


def uf_components(n, left, right):
    """Connected components of ``n`` nodes under the edges ``left[k]--right[k]``.

    Union by rank with path compression; each node is labelled with the
    smallest node index of its component.
    """
    parent = list(range(n))
    rank = [0] * n

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for a, b in zip(left.tolist(), right.tolist()):
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        if rank[ra] < rank[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        if rank[ra] == rank[rb]:
            rank[ra] += 1

    label = np.empty(n, dtype=np.int64)
    smallest = [-1] * n
    for i in range(n):
        r = find(i)
        if smallest[r] < 0:
            smallest[r] = i
        label[i] = smallest[r]
    return label


def direct_paths(succ_ptr, succ_idx, out_ptr, out_ent, starts, depth, max_paths):
    """Enumerate chains ``t1 -> ... -> t_depth`` from each start and expand
    the final transaction over its distinct output entities.

    Returns ``(rows, truncated)`` where ``rows`` has shape ``(k, depth + 1)``
    holding transaction indices followed by the final entity.
    """
    succ_ptr = succ_ptr.tolist()
    succ_idx = succ_idx.tolist()
    out_ptr = out_ptr.tolist()
    out_ent = out_ent.tolist()
    rows = []
    path = [0] * depth
    truncated = False

    def emit(t_last):
        nonlocal truncated
        for k in range(out_ptr[t_last], out_ptr[t_last + 1]):
            if len(rows) >= max_paths:
                truncated = True
                return False
            rows.append(path + [out_ent[k]])
        return True

    def walk(level, t):
        path[level] = t
        if level == depth - 1:
            return emit(t)
        for k in range(succ_ptr[t], succ_ptr[t + 1]):
            if not walk(level + 1, succ_idx[k]):
                return False
        return True

    for t in starts.tolist():
        if not walk(0, t):
            break
    out = np.asarray(rows, dtype=np.int64).reshape(len(rows), depth + 1)
    return out, truncated


def best_split(X, order, node_of, node, grad, hess, min_leaf, min_hess, reg_lambda):
    """Exact greedy split search for one tree node.

    ``order[f]`` lists all sample indices sorted by feature ``f``; only rows
    with ``node_of[i] == node`` take part. Samples with ``X[i, f] <= threshold``
    go left. Returns ``(feature, threshold, gain)``; feature is -1 when no
    admissible split exists. Ties keep the lowest feature index and the
    lowest threshold.
    """
    n_features = X.shape[1]
    members = node_of == node
    g_tot = 0.0
    h_tot = 0.0
    n_tot = 0
    for i in np.flatnonzero(members).tolist():
        g_tot += grad[i]
        h_tot += hess[i]
        n_tot += 1
    parent_score = g_tot * g_tot / (h_tot + reg_lambda)

    best_f, best_thr, best_gain = -1, 0.0, 0.0
    Xl = X
    node_list = node_of.tolist()
    grad_l = grad.tolist()
    hess_l = hess.tolist()
    for f in range(n_features):
        col = Xl[:, f].tolist()
        gl = 0.0
        hl = 0.0
        nl = 0
        prev = 0.0
        for i in order[f].tolist():
            if node_list[i] != node:
                continue
            x = col[i]
            if nl > 0 and x > prev:
                nr = n_tot - nl
                hr = h_tot - hl
                if nl >= min_leaf and nr >= min_leaf and hl >= min_hess and hr >= min_hess:
                    gr = g_tot - gl
                    gain = gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent_score
                    if gain > best_gain:
                        best_f, best_thr, best_gain = f, prev, gain
            gl += grad_l[i]
            hl += hess_l[i]
            nl += 1
            prev = x
    return best_f, best_thr, best_gain
