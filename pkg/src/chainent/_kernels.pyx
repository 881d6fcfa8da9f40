# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Mirrors ``_kernels_py`` line for line."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"


cdef inline Py_ssize_t _find(Py_ssize_t* parent, Py_ssize_t x) noexcept nogil:
    cdef Py_ssize_t root = x, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


def uf_components(Py_ssize_t n, left, right):
    cdef const cnp.int64_t[:] lv = np.ascontiguousarray(left, dtype=np.int64)
    cdef const cnp.int64_t[:] rv = np.ascontiguousarray(right, dtype=np.int64)
    cdef Py_ssize_t m = lv.shape[0], k, i, ra, rb, tmp
    label = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[:] lab = label
    cdef Py_ssize_t* parent = <Py_ssize_t*> malloc(max(n, 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* rank = <Py_ssize_t*> malloc(max(n, 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* smallest = <Py_ssize_t*> malloc(max(n, 1) * sizeof(Py_ssize_t))
    if parent == NULL or rank == NULL or smallest == NULL:
        free(parent); free(rank); free(smallest)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                parent[i] = i
                rank[i] = 0
                smallest[i] = -1
            for k in range(m):
                ra = _find(parent, lv[k])
                rb = _find(parent, rv[k])
                if ra == rb:
                    continue
                if rank[ra] < rank[rb]:
                    tmp = ra
                    ra = rb
                    rb = tmp
                parent[rb] = ra
                if rank[ra] == rank[rb]:
                    rank[ra] += 1
            for i in range(n):
                ra = _find(parent, i)
                if smallest[ra] < 0:
                    smallest[ra] = i
                lab[i] = smallest[ra]
    finally:
        free(parent)
        free(rank)
        free(smallest)
    return label


cdef class _RowBuffer:
    cdef cnp.int64_t* data
    cdef Py_ssize_t n_rows, cap, width

    def __cinit__(self, Py_ssize_t width):
        self.width = width
        self.cap = 64
        self.n_rows = 0
        self.data = <cnp.int64_t*> malloc(self.cap * width * sizeof(cnp.int64_t))
        if self.data == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.data)

    cdef int push(self, cnp.int64_t* path, Py_ssize_t depth, cnp.int64_t ent) except -1:
        cdef Py_ssize_t j
        cdef cnp.int64_t* grown
        if self.n_rows == self.cap:
            grown = <cnp.int64_t*> malloc(2 * self.cap * self.width * sizeof(cnp.int64_t))
            if grown == NULL:
                raise MemoryError()
            for j in range(self.cap * self.width):
                grown[j] = self.data[j]
            free(self.data)
            self.data = grown
            self.cap *= 2
        for j in range(depth):
            self.data[self.n_rows * self.width + j] = path[j]
        self.data[self.n_rows * self.width + depth] = ent
        self.n_rows += 1
        return 0

    cdef object to_array(self):
        out = np.empty((self.n_rows, self.width), dtype=np.int64)
        cdef cnp.int64_t[:, :] ov = out
        cdef Py_ssize_t r, j
        for r in range(self.n_rows):
            for j in range(self.width):
                ov[r, j] = self.data[r * self.width + j]
        return out


def direct_paths(succ_ptr, succ_idx, out_ptr, out_ent, starts, Py_ssize_t depth, Py_ssize_t max_paths):
    cdef const cnp.int64_t[:] sp = np.ascontiguousarray(succ_ptr, dtype=np.int64)
    cdef const cnp.int64_t[:] si = np.ascontiguousarray(succ_idx, dtype=np.int64)
    cdef const cnp.int64_t[:] op = np.ascontiguousarray(out_ptr, dtype=np.int64)
    cdef const cnp.int64_t[:] oe = np.ascontiguousarray(out_ent, dtype=np.int64)
    cdef const cnp.int64_t[:] st = np.ascontiguousarray(starts, dtype=np.int64)
    cdef _RowBuffer buf = _RowBuffer(depth + 1)
    cdef cnp.int64_t path[8]
    cdef Py_ssize_t cursor[8]
    cdef Py_ssize_t s, level, t, k
    cdef bint truncated = False
    if depth < 1 or depth > 8:
        raise ValueError("depth must be in 1..8")
    # iterative DFS; cursor[level] is the next successor slot to visit
    for s in range(st.shape[0]):
        level = 0
        path[0] = st[s]
        cursor[0] = sp[st[s]]
        while level >= 0 and not truncated:
            t = path[level]
            if level == depth - 1:
                for k in range(op[t], op[t + 1]):
                    if buf.n_rows >= max_paths:
                        truncated = True
                        break
                    buf.push(path, depth, oe[k])
                level -= 1
                continue
            if cursor[level] < sp[t + 1]:
                k = cursor[level]
                cursor[level] += 1
                level += 1
                path[level] = si[k]
                cursor[level] = sp[si[k]]
            else:
                level -= 1
        if truncated:
            break
    return buf.to_array(), bool(truncated)


def best_split(double[:, :] X, order, node_of, Py_ssize_t node, grad, hess,
               Py_ssize_t min_leaf, double min_hess, double reg_lambda):
    cdef const cnp.int64_t[:, :] ordv = np.ascontiguousarray(order, dtype=np.int64)
    cdef const cnp.int64_t[:] nodev = np.ascontiguousarray(node_of, dtype=np.int64)
    cdef const double[:] g = np.ascontiguousarray(grad, dtype=np.float64)
    cdef const double[:] h = np.ascontiguousarray(hess, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t f, j, i, nl, nr, n_tot = 0
    cdef double g_tot = 0.0, h_tot = 0.0, parent_score
    cdef double gl, hl, gr, hr, x, prev, gain
    cdef Py_ssize_t best_f = -1
    cdef double best_thr = 0.0, best_gain = 0.0
    with nogil:
        for i in range(n):
            if nodev[i] == node:
                g_tot += g[i]
                h_tot += h[i]
                n_tot += 1
        parent_score = g_tot * g_tot / (h_tot + reg_lambda)
        for f in range(d):
            gl = 0.0
            hl = 0.0
            nl = 0
            prev = 0.0
            for j in range(n):
                i = ordv[f, j]
                if nodev[i] != node:
                    continue
                x = X[i, f]
                if nl > 0 and x > prev:
                    nr = n_tot - nl
                    hr = h_tot - hl
                    if nl >= min_leaf and nr >= min_leaf and hl >= min_hess and hr >= min_hess:
                        gr = g_tot - gl
                        gain = gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent_score
                        if gain > best_gain:
                            best_f = f
                            best_thr = prev
                            best_gain = gain
                gl += g[i]
                hl += h[i]
                nl += 1
                prev = x
    return best_f, best_thr, best_gain
