# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for box-union geometry.

Same signatures and results as :mod:`nsprivacy._pykernels`.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.math cimport sqrt

cnp.import_array()


cdef void _sort_by_key(double* keys, Py_ssize_t* vals, Py_ssize_t n) noexcept nogil:
    # in-place heapsort on (keys, vals); deterministic, no recursion
    cdef Py_ssize_t start, end, root, child, swap
    cdef double tk
    cdef Py_ssize_t tv
    if n < 2:
        return
    start = (n - 2) // 2
    while True:
        root = start
        while 2 * root + 1 < n:
            child = 2 * root + 1
            swap = root
            if keys[swap] < keys[child] or (keys[swap] == keys[child] and vals[swap] < vals[child]):
                swap = child
            if child + 1 < n and (keys[swap] < keys[child + 1] or
                                  (keys[swap] == keys[child + 1] and vals[swap] < vals[child + 1])):
                swap = child + 1
            if swap == root:
                break
            tk = keys[root]; keys[root] = keys[swap]; keys[swap] = tk
            tv = vals[root]; vals[root] = vals[swap]; vals[swap] = tv
            root = swap
        if start == 0:
            break
        start -= 1
    end = n - 1
    while end > 0:
        tk = keys[end]; keys[end] = keys[0]; keys[0] = tk
        tv = vals[end]; vals[end] = vals[0]; vals[0] = tv
        root = 0
        while 2 * root + 1 < end:
            child = 2 * root + 1
            swap = root
            if keys[swap] < keys[child] or (keys[swap] == keys[child] and vals[swap] < vals[child]):
                swap = child
            if child + 1 < end and (keys[swap] < keys[child + 1] or
                                    (keys[swap] == keys[child + 1] and vals[swap] < vals[child + 1])):
                swap = child + 1
            if swap == root:
                break
            tk = keys[root]; keys[root] = keys[swap]; keys[swap] = tk
            tv = vals[root]; vals[root] = vals[swap]; vals[swap] = tv
            root = swap
        end -= 1


cdef double _measure_rec(const double[:, ::1] lo, const double[:, ::1] hi,
                         Py_ssize_t* idx, Py_ssize_t m, int d, int n) noexcept nogil:
    # sweep along dimension d with an active set; recurse on cross-sections
    cdef Py_ssize_t i, j, c, nc, na, ptr, w
    cdef double total = 0.0, cur_lo, cur_hi, a, b
    cdef double* keys
    cdef Py_ssize_t* order
    cdef double* ckeys
    cdef Py_ssize_t* cidx
    cdef Py_ssize_t* active
    if m == 0:
        return 0.0
    keys = <double*> malloc(m * sizeof(double))
    order = <Py_ssize_t*> malloc(m * sizeof(Py_ssize_t))
    for i in range(m):
        keys[i] = lo[idx[i], d]
        order[i] = idx[i]
    _sort_by_key(keys, order, m)
    if d == n - 1:
        cur_lo = lo[order[0], d]
        cur_hi = hi[order[0], d]
        for i in range(1, m):
            a = lo[order[i], d]
            b = hi[order[i], d]
            if a > cur_hi:
                total += cur_hi - cur_lo
                cur_lo = a
                cur_hi = b
            elif b > cur_hi:
                cur_hi = b
        total += cur_hi - cur_lo
        free(keys)
        free(order)
        return total

    nc = 2 * m
    ckeys = <double*> malloc(nc * sizeof(double))
    cidx = <Py_ssize_t*> malloc(nc * sizeof(Py_ssize_t))
    active = <Py_ssize_t*> malloc(m * sizeof(Py_ssize_t))
    for i in range(m):
        ckeys[2 * i] = lo[idx[i], d]
        ckeys[2 * i + 1] = hi[idx[i], d]
        cidx[2 * i] = 2 * i
        cidx[2 * i + 1] = 2 * i + 1
    _sort_by_key(ckeys, cidx, nc)
    na = 0
    ptr = 0
    for c in range(nc - 1):
        a = ckeys[c]
        b = ckeys[c + 1]
        if b <= a:
            continue
        while ptr < m and lo[order[ptr], d] <= a:
            active[na] = order[ptr]
            na += 1
            ptr += 1
        w = 0
        for i in range(na):
            j = active[i]
            if hi[j, d] > a:
                active[w] = j
                w += 1
        na = w
        if na > 0:
            total += (b - a) * _measure_rec(lo, hi, active, na, d + 1, n)
    free(keys)
    free(order)
    free(ckeys)
    free(cidx)
    free(active)
    return total


def union_measure(cnp.ndarray lo_arr, cnp.ndarray hi_arr):
    """Lebesgue measure of a union of closed boxes given as (k, n) corner arrays."""
    cdef const double[:, ::1] lo = np.ascontiguousarray(lo_arr, dtype=np.float64)
    cdef const double[:, ::1] hi = np.ascontiguousarray(hi_arr, dtype=np.float64)
    cdef Py_ssize_t k = lo.shape[0], i, d, m = 0
    cdef int n = <int> lo.shape[1]
    cdef Py_ssize_t* idx
    cdef double result
    cdef bint keep
    if k == 0:
        return 0.0
    idx = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    for i in range(k):
        keep = True
        for d in range(n):
            if hi[i, d] <= lo[i, d]:
                keep = False
                break
        if keep:
            idx[m] = i
            m += 1
    with nogil:
        result = _measure_rec(lo, hi, idx, m, 0, n)
    free(idx)
    return result


def max_box_distance(cnp.ndarray lo_arr, cnp.ndarray hi_arr,
                     cnp.ndarray order_arr, cnp.ndarray ub_arr, double best):
    """Largest corner-to-corner distance over box pairs.

    ``order`` lists box indices by decreasing upper bound ``ub``; ``best`` is a
    known lower bound. Returns ``(distance, i, j)``; ``i = j = -1`` when no pair
    beats ``best``.
    """
    cdef const double[:, ::1] lo = np.ascontiguousarray(lo_arr, dtype=np.float64)
    cdef const double[:, ::1] hi = np.ascontiguousarray(hi_arr, dtype=np.float64)
    cdef const cnp.int64_t[::1] order = np.ascontiguousarray(order_arr, dtype=np.int64)
    cdef const double[::1] ub = np.ascontiguousarray(ub_arr, dtype=np.float64)
    cdef Py_ssize_t k = order.shape[0], a, b, i, j, d
    cdef Py_ssize_t n = lo.shape[1]
    cdef Py_ssize_t bi = -1, bj = -1
    cdef double best2 = best * best if best > 0 else 0.0
    cdef double s, t, u
    with nogil:
        for a in range(k):
            i = order[a]
            if ub[i] * ub[i] <= best2:
                break
            for b in range(a, k):
                j = order[b]
                if ub[j] * ub[j] <= best2:
                    break
                s = 0.0
                for d in range(n):
                    t = hi[i, d] - lo[j, d]
                    u = hi[j, d] - lo[i, d]
                    if u > t:
                        t = u
                    s += t * t
                if s > best2:
                    best2 = s
                    bi = i
                    bj = j
    return sqrt(best2), bi, bj


cdef Py_ssize_t _find(Py_ssize_t* parent, Py_ssize_t x) noexcept nogil:
    cdef Py_ssize_t r = x, t
    while parent[r] != r:
        r = parent[r]
    while parent[x] != r:
        t = parent[x]
        parent[x] = r
        x = t
    return r


def touching_components(cnp.ndarray lo_arr, cnp.ndarray hi_arr):
    """Component labels of closed boxes under the 'closed boxes intersect' relation.

    Labels are numbered by the smallest box index in each component.
    """
    cdef const double[:, ::1] lo = np.ascontiguousarray(lo_arr, dtype=np.float64)
    cdef const double[:, ::1] hi = np.ascontiguousarray(hi_arr, dtype=np.float64)
    cdef Py_ssize_t k = lo.shape[0], n = lo.shape[1], a, b, i, j, d, ri, rj
    cdef double* keys
    cdef Py_ssize_t* order
    cdef Py_ssize_t* parent
    cdef bint hit
    labels = np.empty(k, dtype=np.int64)
    if k == 0:
        return labels
    cdef cnp.int64_t[::1] lab = labels
    keys = <double*> malloc(k * sizeof(double))
    order = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    parent = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    with nogil:
        for i in range(k):
            keys[i] = lo[i, 0]
            order[i] = i
            parent[i] = i
        _sort_by_key(keys, order, k)
        for a in range(k):
            i = order[a]
            for b in range(a + 1, k):
                j = order[b]
                if lo[j, 0] > hi[i, 0]:
                    break
                hit = True
                for d in range(1, n):
                    if lo[j, d] > hi[i, d] or lo[i, d] > hi[j, d]:
                        hit = False
                        break
                if hit:
                    ri = _find(parent, i)
                    rj = _find(parent, j)
                    if ri != rj:
                        if ri < rj:
                            parent[rj] = ri
                        else:
                            parent[ri] = rj
        for i in range(k):
            lab[i] = _find(parent, i)
    free(keys)
    free(order)
    free(parent)
    _, labels = np.unique(labels, return_inverse=True)
    return labels.astype(np.int64)
