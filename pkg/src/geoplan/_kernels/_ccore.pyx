# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: thinning, A* search, directed Hausdorff distance.

Semantics match ``_pure.py`` exactly; see that module for the conventions.
"""

import numpy as np
from libc.math cimport sqrt, INFINITY


cdef int _DR[8]
cdef int _DC[8]
_DR[:] = [0, -1, -1, -1, 0, 1, 1, 1]
_DC[:] = [1, 1, 0, -1, -1, -1, 0, 1]


cdef inline int _code(unsigned char[:, ::1] img, Py_ssize_t r, Py_ssize_t c,
                      Py_ssize_t h, Py_ssize_t w) noexcept nogil:
    cdef int code = 0
    cdef int bit
    cdef Py_ssize_t rr, cc
    for bit in range(8):
        rr = r + _DR[bit]
        cc = c + _DC[bit]
        if 0 <= rr < h and 0 <= cc < w and img[rr, cc]:
            code |= 1 << bit
    return code


cdef bint _subiteration(unsigned char[:, ::1] img, unsigned char[:, ::1] mark,
                        const unsigned char[::1] lut) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], r, c
    cdef bint any_marked = False
    for r in range(h):
        for c in range(w):
            if img[r, c] and lut[_code(img, r, c, h, w)]:
                mark[r, c] = 1
                any_marked = True
            else:
                mark[r, c] = 0
    if any_marked:
        for r in range(h):
            for c in range(w):
                if mark[r, c]:
                    img[r, c] = 0
    return any_marked


cdef bint _cleanup(unsigned char[:, ::1] img, const unsigned char[::1] lut) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], r, c
    cdef bint changed = False
    for r in range(h):
        for c in range(w):
            if img[r, c] and lut[_code(img, r, c, h, w)]:
                img[r, c] = 0
                changed = True
    return changed


cdef bint _break_blocks(unsigned char[:, ::1] img, const unsigned char[::1] lut) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], r, c, k, rr, cc
    cdef bint changed = False
    for r in range(h - 1):
        for c in range(w - 1):
            if not (img[r, c] and img[r, c + 1] and img[r + 1, c] and img[r + 1, c + 1]):
                continue
            for k in range(4):
                rr = r + k // 2
                cc = c + k % 2
                if lut[_code(img, rr, cc, h, w)]:
                    img[rr, cc] = 0
                    changed = True
                    break
    return changed


def _run_thin(unsigned char[:, ::1] img, const unsigned char[::1] first,
              const unsigned char[::1] second, const unsigned char[::1] removable,
              const unsigned char[::1] breakable, bint cleanup):
    cdef unsigned char[:, ::1] mark = np.zeros((img.shape[0], img.shape[1]), dtype=np.uint8)
    cdef bint a, b
    with nogil:
        while True:
            a = _subiteration(img, mark, first)
            b = _subiteration(img, mark, second)
            if a or b:
                continue
            if cleanup and (_cleanup(img, removable) or _break_blocks(img, breakable)):
                continue
            break


def thin(mask, first, second, removable, breakable):
    img = np.ascontiguousarray(mask, dtype=np.uint8).copy()
    _run_thin(img, first, second, removable, breakable, True)
    return img


def guo_hall(mask, first, second, removable, breakable):
    img = np.ascontiguousarray(mask, dtype=np.uint8).copy()
    _run_thin(img, first, second, removable, breakable, False)
    return img


# ---------------------------------------------------------------- A* search

cdef inline bint _less(double fa, long na, double fb, long nb) noexcept nogil:
    return fa < fb or (fa == fb and na < nb)


cdef inline void _push(double[::1] hf, long[::1] hn, Py_ssize_t* size,
                       double f, long node) noexcept nogil:
    cdef Py_ssize_t i = size[0], parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _less(f, node, hf[parent], hn[parent]):
            hf[i] = hf[parent]
            hn[i] = hn[parent]
            i = parent
        else:
            break
    hf[i] = f
    hn[i] = node


cdef inline long _pop(double[::1] hf, long[::1] hn, Py_ssize_t* size) noexcept nogil:
    cdef long top = hn[0]
    cdef Py_ssize_t n, i, child
    cdef double lf
    cdef long ln
    size[0] -= 1
    n = size[0]
    if n == 0:
        return top
    lf = hf[n]
    ln = hn[n]
    i = 0
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and _less(hf[child + 1], hn[child + 1], hf[child], hn[child]):
            child += 1
        if _less(hf[child], hn[child], lf, ln):
            hf[i] = hf[child]
            hn[i] = hn[child]
            i = child
        else:
            break
    hf[i] = lf
    hn[i] = ln
    return top


def astar_csr(const long[::1] indptr, const long[::1] indices, const double[::1] cost,
              const double[:, ::1] xy, long start, long goal, double alpha):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t cap = indices.shape[0] + 1
    g_arr = np.full(n, np.inf, dtype=np.float64)
    prev_arr = np.full(n, -1, dtype=np.int64)
    pedge_arr = np.full(n, -1, dtype=np.int64)
    closed_arr = np.zeros(n, dtype=np.uint8)
    hf_arr = np.empty(cap, dtype=np.float64)
    hn_arr = np.empty(cap, dtype=np.int64)
    cdef double[::1] g = g_arr
    cdef long[::1] prev = prev_arr
    cdef long[::1] pedge = pedge_arr
    cdef unsigned char[::1] closed = closed_arr
    cdef double[::1] hf = hf_arr
    cdef long[::1] hn = hn_arr
    cdef Py_ssize_t size = 0, e
    cdef long u, v, expanded = 0
    cdef double gx = xy[goal, 0], gy = xy[goal, 1], dx, dy, ng, gu
    with nogil:
        g[start] = 0.0
        dx = xy[start, 0] - gx
        dy = xy[start, 1] - gy
        _push(hf, hn, &size, 0.0 + alpha * sqrt(dx * dx + dy * dy), start)
        while size > 0:
            u = _pop(hf, hn, &size)
            if closed[u]:
                continue
            closed[u] = 1
            expanded += 1
            if u == goal:
                break
            gu = g[u]
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                ng = gu + cost[e]
                if ng < g[v]:
                    g[v] = ng
                    prev[v] = u
                    pedge[v] = e
                    dx = xy[v, 0] - gx
                    dy = xy[v, 1] - gy
                    _push(hf, hn, &size, ng + alpha * sqrt(dx * dx + dy * dy), v)
    return g_arr, prev_arr, pedge_arr, expanded


# ------------------------------------------------------- Hausdorff distance

def directed_hausdorff(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t i, j, n = a.shape[0], m = b.shape[0]
    cdef double worst = 0.0, best, dx, dy, d2
    with nogil:
        for i in range(n):
            best = INFINITY
            for j in range(m):
                dx = a[i, 0] - b[j, 0]
                dy = a[i, 1] - b[j, 1]
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
                    if best <= worst:
                        break
            if best > worst:
                worst = best
    return sqrt(worst)
