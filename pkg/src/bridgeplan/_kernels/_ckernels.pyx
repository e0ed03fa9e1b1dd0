# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: grid search, linear assignment, swept collision checks."""

import numpy as np
from libc.math cimport sqrt, ceil, INFINITY

cdef double SQRT2 = 1.4142135623730951


cdef inline bint _less(double ka, long va, double kb, long vb):
    return ka < kb or (ka == kb and va < vb)


cdef inline void _heap_push(double[::1] hk, long[::1] hv, long* n, double key, long val):
    cdef long i = n[0]
    cdef long parent
    n[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if not _less(key, val, hk[parent], hv[parent]):
            break
        hk[i] = hk[parent]
        hv[i] = hv[parent]
        i = parent
    hk[i] = key
    hv[i] = val


cdef inline long _heap_pop(double[::1] hk, long[::1] hv, long* n, double* key):
    cdef long top = hv[0]
    cdef double lastk
    cdef long lastv, i, c
    key[0] = hk[0]
    n[0] -= 1
    if n[0] == 0:
        return top
    lastk = hk[n[0]]
    lastv = hv[n[0]]
    i = 0
    while True:
        c = 2 * i + 1
        if c >= n[0]:
            break
        if c + 1 < n[0] and _less(hk[c + 1], hv[c + 1], hk[c], hv[c]):
            c += 1
        if not _less(hk[c], hv[c], lastk, lastv):
            break
        hk[i] = hk[c]
        hv[i] = hv[c]
        i = c
    hk[i] = lastk
    hv[i] = lastv
    return top


def grid_dijkstra(const unsigned char[:, ::1] free, long si, long sj):
    cdef long H = free.shape[0]
    cdef long W = free.shape[1]
    dist_arr = np.full((H, W), np.inf)
    parent_arr = np.full((H, W), -1, dtype=np.int64)
    cdef double[:, ::1] dist = dist_arr
    cdef long[:, ::1] parent = parent_arr
    if not free[si, sj]:
        return dist_arr, parent_arr
    cdef long cap = 8 * H * W + 8
    cdef double[::1] hk = np.empty(cap)
    cdef long[::1] hv = np.empty(cap, dtype=np.int64)
    cdef long n = 0
    cdef long di[8]
    cdef long dj[8]
    cdef double dc[8]
    di[:] = [-1, 1, 0, 0, -1, -1, 1, 1]
    dj[:] = [0, 0, -1, 1, -1, 1, -1, 1]
    dc[:] = [1.0, 1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2, SQRT2]
    cdef long idx, i, j, k, ni, nj
    cdef double d, nd
    dist[si, sj] = 0.0
    _heap_push(hk, hv, &n, 0.0, si * W + sj)
    while n > 0:
        idx = _heap_pop(hk, hv, &n, &d)
        i = idx // W
        j = idx - i * W
        if d > dist[i, j]:
            continue
        for k in range(8):
            ni = i + di[k]
            nj = j + dj[k]
            if ni < 0 or ni >= H or nj < 0 or nj >= W or not free[ni, nj]:
                continue
            if k >= 4 and (not free[i, nj] or not free[ni, j]):
                continue
            nd = d + dc[k]
            if nd < dist[ni, nj]:
                dist[ni, nj] = nd
                parent[ni, nj] = idx
                _heap_push(hk, hv, &n, nd, ni * W + nj)
    return dist_arr, parent_arr


def linear_assignment(const double[:, ::1] cost):
    """Column assigned to each row of a square cost matrix (minimum total cost)."""
    cdef long n = cost.shape[0]
    cdef double[::1] u = np.zeros(n + 1)
    cdef double[::1] v = np.zeros(n + 1)
    cdef double[::1] minv = np.empty(n + 1)
    cdef long[::1] p = np.zeros(n + 1, dtype=np.int64)
    cdef long[::1] way = np.zeros(n + 1, dtype=np.int64)
    cdef unsigned char[::1] used = np.zeros(n + 1, dtype=np.uint8)
    cdef long i, j, i0, j0, j1
    cdef double delta, cur
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    out = np.empty(n, dtype=np.int64)
    cdef long[::1] o = out
    for j in range(1, n + 1):
        o[p[j] - 1] = j - 1
    return out


def first_collision(const double[:, ::1] pts, const double[:, ::1] centers,
                    const double[::1] radii, const double[::1] lo, const double[::1] hi,
                    double spacing):
    """Index of the first segment whose swept samples leave the box or enter an obstacle, else -1."""
    cdef long L = pts.shape[0]
    cdef long d = pts.shape[1]
    cdef long K = radii.shape[0]
    cdef long s, m, nsub, c, k
    cdef double seg, a, x, acc, diff
    cdef bint bad
    for s in range(L - 1):
        seg = 0.0
        for c in range(d):
            diff = pts[s + 1, c] - pts[s, c]
            seg += diff * diff
        nsub = <long>ceil(sqrt(seg) / spacing)
        if nsub < 1:
            nsub = 1
        for m in range(0 if s == 0 else 1, nsub + 1):
            a = m / <double>nsub
            bad = False
            for c in range(d):
                x = pts[s, c] + a * (pts[s + 1, c] - pts[s, c])
                if x < lo[c] or x > hi[c]:
                    bad = True
                    break
            k = 0
            while not bad and k < K:
                acc = 0.0
                for c in range(d):
                    diff = pts[s, c] + a * (pts[s + 1, c] - pts[s, c]) - centers[k, c]
                    acc += diff * diff
                bad = acc <= radii[k] * radii[k]
                k += 1
            if bad:
                return s
    return -1


def segment_free(const unsigned char[:, ::1] free, long i0, long j0, long i1, long j1):
    """True when every cell touched by the straight segment between two cells is free."""
    cdef long n, k
    cdef long di = i1 - i0
    cdef long dj = j1 - j0
    cdef double fi, fj
    n = di if di > 0 else -di
    k = dj if dj > 0 else -dj
    if k > n:
        n = k
    n = 2 * n + 1
    for k in range(n + 1):
        fi = i0 + di * (k / <double>n)
        fj = j0 + dj * (k / <double>n)
        if not free[<long>(fi + 0.5), <long>(fj + 0.5)]:
            return False
    return True
