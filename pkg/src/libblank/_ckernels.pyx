# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Contracts match ``libblank._pykernels`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, calloc

cnp.import_array()

cdef extern from *:
    ctypedef long long i128 "__int128"

# Exact integer comparisons stay in 128 bits below this row count.
MAX_ROWS = 1 << 20


def immediate_dominators(Py_ssize_t n, Py_ssize_t root, succ_ptr, succ_idx):
    cdef cnp.int64_t[::1] sp = np.ascontiguousarray(succ_ptr, dtype=np.int64)
    cdef cnp.int64_t[::1] si = np.ascontiguousarray(succ_idx, dtype=np.int64)
    cdef Py_ssize_t m = si.shape[0]
    cdef cnp.int64_t[::1] pp = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] pi = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] fill = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] order = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] rpo = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] idom = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] st_node = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] st_edge = np.empty(n, dtype=np.int64)
    cdef char *visited = <char *> calloc(n if n > 0 else 1, 1)
    cdef Py_ssize_t u, v, k, top, npost, i, j, b, p, a, c, new, nr
    cdef bint changed
    if visited == NULL:
        raise MemoryError()
    try:
        for u in range(n):
            for k in range(sp[u], sp[u + 1]):
                pp[si[k] + 1] += 1
        for u in range(n):
            pp[u + 1] += pp[u]
        for u in range(n):
            for k in range(sp[u], sp[u + 1]):
                v = si[k]
                pi[pp[v] + fill[v]] = u
                fill[v] += 1

        # postorder into rpo[] (reversed afterwards)
        npost = 0
        top = 0
        visited[root] = 1
        st_node[0] = root
        st_edge[0] = sp[root]
        while top >= 0:
            u = st_node[top]
            k = st_edge[top]
            if k < sp[u + 1]:
                st_edge[top] = k + 1
                v = si[k]
                if not visited[v]:
                    visited[v] = 1
                    top += 1
                    st_node[top] = v
                    st_edge[top] = sp[v]
            else:
                top -= 1
                rpo[npost] = u
                npost += 1
        nr = npost
        for i in range(nr // 2):
            j = nr - 1 - i
            u = rpo[i]
            rpo[i] = rpo[j]
            rpo[j] = u
        for i in range(nr):
            order[rpo[i]] = i

        idom[root] = root
        changed = True
        while changed:
            changed = False
            for i in range(1, nr):
                b = rpo[i]
                new = -1
                for k in range(pp[b], pp[b + 1]):
                    p = pi[k]
                    if idom[p] == -1:
                        continue
                    if new == -1:
                        new = p
                        continue
                    a = p
                    c = new
                    while a != c:
                        while order[a] > order[c]:
                            a = idom[a]
                        while order[c] > order[a]:
                            c = idom[c]
                    new = a
                if idom[b] != new:
                    idom[b] = new
                    changed = True
    finally:
        free(visited)
    return [int(x) for x in idom]


cdef inline double _midpoint(double a, double b):
    cdef double t = (a + b) / 2.0
    return a if t >= b else t


def best_split(X, y, Py_ssize_t n_classes):
    cdef cnp.float64_t[:, ::1] xs = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int64_t[::1] ys = np.ascontiguousarray(y, dtype=np.int64)
    cdef Py_ssize_t n = ys.shape[0]
    if n < 2:
        return -1, 0.0, 0, 0
    if n >= MAX_ROWS:
        raise OverflowError("too many rows for the compiled split kernel")
    cdef Py_ssize_t m = xs.shape[1]
    cdef cnp.int64_t[::1] total = np.zeros(n_classes, dtype=np.int64)
    cdef cnp.int64_t[::1] left = np.zeros(n_classes, dtype=np.int64)
    cdef cnp.int64_t[::1] right = np.zeros(n_classes, dtype=np.int64)
    cdef cnp.int64_t[::1] idx
    cdef Py_ssize_t i, f, c, nl, nrr
    cdef long long parent = 0, sl, sr, num, den
    cdef long long best_num = 0, best_den = 1
    cdef Py_ssize_t best_f = -1
    cdef double best_t = 0.0, a, b
    for i in range(n):
        total[ys[i]] += 1
    for c in range(n_classes):
        parent += total[c] * total[c]

    for f in range(m):
        idx = np.argsort(np.asarray(xs[:, f]), kind="stable").astype(np.int64)
        for c in range(n_classes):
            left[c] = 0
            right[c] = total[c]
        sl = 0
        sr = parent
        for i in range(n - 1):
            c = ys[idx[i]]
            sl += 2 * left[c] + 1
            sr -= 2 * right[c] - 1
            left[c] += 1
            right[c] -= 1
            a = xs[idx[i], f]
            b = xs[idx[i + 1], f]
            if a == b:
                continue
            nl = i + 1
            nrr = n - nl
            num = sl * nrr + sr * nl
            den = nl * nrr
            if best_f == -1 or <i128> num * best_den > <i128> best_num * den:
                best_f = f
                best_t = _midpoint(a, b)
                best_num = num
                best_den = den
    if best_f == -1 or <i128> best_num * n <= <i128> parent * best_den:
        return -1, 0.0, 0, 0
    return best_f, best_t, best_num, best_den
