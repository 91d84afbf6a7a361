# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Same contracts and arithmetic order as ``_kernels_py``."""

import numpy as np

from libc.math cimport log, exp, INFINITY
from libc.stdlib cimport malloc, free

BACKEND = "compiled"


cdef inline double part_cost(const long long* cnt, int C, const double* lf) noexcept nogil:
    cdef long long n = 0
    cdef double s = 0.0
    cdef int z
    for z in range(C):
        n += cnt[z]
        s += lf[cnt[z]]
    return (lf[n + C - 1] - lf[C - 1] - lf[n]) + (lf[n] - s)


cdef inline double prior(long long I, long long n_total, long long n_obs, const double* lf) noexcept nogil:
    return log(<double>n_total) + (lf[n_obs + I - 1] - lf[I - 1] - lf[n_obs])


cdef double range_cost(const long long* prefix, long long a, long long b, int C,
                       const double* lf, long long* tmp) noexcept nogil:
    cdef int z
    for z in range(C):
        tmp[z] = prefix[b * C + z] - prefix[a * C + z]
    return part_cost(tmp, C, lf)


def partition_cost(long long[:, ::1] counts, starts, long long n_total, long long n_obs, double[::1] lf):
    cdef Py_ssize_t n = counts.shape[0]
    cdef int C = counts.shape[1]
    cdef long long[:, ::1] prefix = np.vstack(
        [np.zeros((1, C), dtype=np.int64), np.cumsum(counts, axis=0)]
    )
    cdef long long[::1] tmp = np.zeros(C, dtype=np.int64)
    bounds = list(starts) + [n]
    cdef double total = 0.0
    cdef long long a, b
    for i in range(len(bounds) - 1):
        a = bounds[i]
        b = bounds[i + 1]
        total += range_cost(&prefix[0, 0], a, b, C, &lf[0], &tmp[0])
    return prior(len(starts), n_total, n_obs, &lf[0]) + total


cdef list exact(long long[:, ::1] prefix, Py_ssize_t n, int C, long long n_total,
                long long n_obs, const double* lf):
    cdef double[:, ::1] F = np.zeros((n + 1, n + 1))
    cdef double[:, ::1] best = np.full((n + 1, n + 1), np.inf)
    cdef long long[:, ::1] arg = np.full((n + 1, n + 1), -1, dtype=np.int64)
    cdef long long[::1] tmp = np.zeros(C, dtype=np.int64)
    cdef Py_ssize_t a, b, i, l, best_I
    cdef double v, v_best, best_v
    cdef long long l_best
    with nogil:
        for a in range(n):
            for b in range(a + 1, n + 1):
                F[a, b] = range_cost(&prefix[0, 0], a, b, C, lf, &tmp[0])
        for b in range(1, n + 1):
            best[1, b] = F[0, b]
        for i in range(2, n + 1):
            for b in range(i, n + 1):
                v_best = INFINITY
                l_best = -1
                for l in range(i - 1, b):
                    v = best[i - 1, l] + F[l, b]
                    if v < v_best:
                        v_best = v
                        l_best = l
                best[i, b] = v_best
                arg[i, b] = l_best
        best_I = 1
        best_v = prior(1, n_total, n_obs, lf) + best[1, n]
        for i in range(2, n + 1):
            v = prior(i, n_total, n_obs, lf) + best[i, n]
            if v < best_v:
                best_I = i
                best_v = v
    starts = []
    b = n
    for i in range(best_I, 1, -1):
        l = arg[i, b]
        starts.append(l)
        b = l
    starts.append(0)
    return starts[::-1]


# binary min-heap of merge candidates ordered by (delta, left block)
cdef struct Entry:
    double key
    long long a
    long long b
    long long va
    long long vb


cdef inline bint less(Entry* x, Entry* y) noexcept nogil:
    if x.key != y.key:
        return x.key < y.key
    if x.a != y.a:
        return x.a < y.a
    if x.b != y.b:
        return x.b < y.b
    if x.va != y.va:
        return x.va < y.va
    return x.vb < y.vb


cdef void heap_push(Entry* h, Py_ssize_t* size, Entry e) noexcept nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    h[i] = e
    while i > 0:
        parent = (i - 1) >> 1
        if less(&h[i], &h[parent]):
            h[i], h[parent] = h[parent], h[i]
            i = parent
        else:
            break


cdef Entry heap_pop(Entry* h, Py_ssize_t* size) noexcept nogil:
    cdef Entry top = h[0]
    cdef Py_ssize_t i = 0, c, n
    size[0] -= 1
    n = size[0]
    h[0] = h[n]
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and less(&h[c + 1], &h[c]):
            c += 1
        if less(&h[c], &h[i]):
            h[i], h[c] = h[c], h[i]
            i = c
        else:
            break
    return top


cdef list greedy(long long[:, ::1] counts, Py_ssize_t n, int C, long long n_total,
                 long long n_obs, const double* lf):
    cdef long long[:, ::1] cnt = np.array(counts, dtype=np.int64, copy=True)
    cdef double[::1] fcost = np.empty(n)
    cdef long long[::1] nxt = np.arange(1, n + 1, dtype=np.int64)
    cdef long long[::1] prv = np.arange(-1, n - 1, dtype=np.int64)
    cdef unsigned char[::1] alive = np.ones(n, dtype=np.uint8)
    cdef long long[::1] version = np.zeros(n, dtype=np.int64)
    cdef long long[::1] absorbed = np.empty(max(n, 1), dtype=np.int64)
    cdef long long[::1] merged = np.zeros(C, dtype=np.int64)
    cdef Py_ssize_t cap = 3 * n + 4, size = 0, n_abs = 0, best_k = 0
    cdef Entry* heap = <Entry*> malloc(cap * sizeof(Entry))
    cdef Entry e
    cdef long long a, b, I
    cdef int z
    cdef double sumf = 0.0, v, best_v
    if heap == NULL:
        raise MemoryError()
    try:
        with nogil:
            for a in range(n):
                fcost[a] = part_cost(&cnt[a, 0], C, lf)
            for a in range(n - 1):
                push_pair(heap, &size, cnt, fcost, version, a, a + 1, C, lf, &merged[0])
            for a in range(n):
                sumf += fcost[a]
            I = n
            best_v = prior(I, n_total, n_obs, lf) + sumf
            while size > 0:
                e = heap_pop(heap, &size)
                a = e.a
                b = e.b
                if not (alive[a] and alive[b]) or nxt[a] != b or version[a] != e.va or version[b] != e.vb:
                    continue
                for z in range(C):
                    cnt[a, z] += cnt[b, z]
                fcost[a] = part_cost(&cnt[a, 0], C, lf)
                alive[b] = 0
                nxt[a] = nxt[b]
                if nxt[b] < n:
                    prv[nxt[b]] = a
                version[a] += 1
                absorbed[n_abs] = b
                n_abs += 1
                sumf += e.key
                I -= 1
                v = prior(I, n_total, n_obs, lf) + sumf
                if v <= best_v:
                    best_v = v
                    best_k = n_abs
                if prv[a] >= 0:
                    push_pair(heap, &size, cnt, fcost, version, prv[a], a, C, lf, &merged[0])
                if nxt[a] < n:
                    push_pair(heap, &size, cnt, fcost, version, a, nxt[a], C, lf, &merged[0])
    finally:
        free(heap)
    keep = np.ones(n, dtype=bool)
    keep[np.asarray(absorbed[:best_k])] = False
    return np.flatnonzero(keep).tolist()


cdef inline void push_pair(Entry* heap, Py_ssize_t* size, long long[:, ::1] cnt, double[::1] fcost,
                           long long[::1] version, long long a, long long b, int C,
                           const double* lf, long long* merged) noexcept nogil:
    cdef Entry e
    cdef int z
    for z in range(C):
        merged[z] = cnt[a, z] + cnt[b, z]
    e.key = part_cost(merged, C, lf) - fcost[a] - fcost[b]
    e.a = a
    e.b = b
    e.va = version[a]
    e.vb = version[b]
    heap_push(heap, size, e)


cdef list post_optimize(long long[:, ::1] prefix, Py_ssize_t n, int C, list starts_in,
                        const double* lf, Py_ssize_t max_sweeps):
    cdef long long[::1] starts = np.asarray(starts_in, dtype=np.int64)
    cdef Py_ssize_t n_parts = starts.shape[0]
    cdef long long[::1] tmp = np.zeros(C, dtype=np.int64)
    cdef const long long* P = &prefix[0, 0]
    cdef Py_ssize_t sweep, p
    cdef long long lo, hi, s, best_s
    cdef double old, d, best_d
    cdef bint moved
    with nogil:
        for sweep in range(max_sweeps):
            moved = False
            for p in range(1, n_parts):
                lo = starts[p - 1]
                hi = starts[p + 1] if p + 1 < n_parts else n
                s = starts[p]
                old = range_cost(P, lo, s, C, lf, &tmp[0]) + range_cost(P, s, hi, C, lf, &tmp[0])
                best_d = -1e-10
                best_s = -1
                if s - 1 > lo:
                    d = (range_cost(P, lo, s - 1, C, lf, &tmp[0]) + range_cost(P, s - 1, hi, C, lf, &tmp[0])) - old
                    if d < best_d:
                        best_d = d
                        best_s = s - 1
                if s + 1 < hi:
                    d = (range_cost(P, lo, s + 1, C, lf, &tmp[0]) + range_cost(P, s + 1, hi, C, lf, &tmp[0])) - old
                    if d < best_d:
                        best_d = d
                        best_s = s + 1
                if best_s >= 0:
                    starts[p] = best_s
                    moved = True
            if not moved:
                break
    return np.asarray(starts).tolist()


def optimize_partition(counts, long long n_total, long long n_obs, Py_ssize_t exact_limit, lf):
    cdef long long[:, ::1] c = np.ascontiguousarray(counts, dtype=np.int64)
    cdef double[::1] lfv = np.ascontiguousarray(lf, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    cdef int C = c.shape[1]
    cdef long long[:, ::1] prefix = np.vstack(
        [np.zeros((1, C), dtype=np.int64), np.cumsum(c, axis=0)]
    )
    if n <= exact_limit:
        starts = exact(prefix, n, C, n_total, n_obs, &lfv[0])
    else:
        starts = greedy(c, n, C, n_total, n_obs, &lfv[0])
        starts = post_optimize(prefix, n, C, starts, &lfv[0], 10 * n)
    return np.asarray(starts, dtype=np.int64), partition_cost(c, starts, n_total, n_obs, lfv)


def class_loglik(double[:, ::1] L, long long[::1] y):
    cdef double[:, ::1] zero = np.zeros((L.shape[0], L.shape[1]))
    return class_loglik_shifted(L, zero, 0.0, y)


def class_loglik_shifted(double[:, ::1] L, double[:, ::1] contrib, double delta, long long[::1] y):
    """Sum over rows of ln softmax(L[k] + delta * contrib[k])[y_k]."""
    cdef Py_ssize_t N = L.shape[0], k
    cdef int C = L.shape[1], z
    cdef double acc = 0.0, m, s, t, ty
    with nogil:
        for k in range(N):
            m = -INFINITY
            for z in range(C):
                t = L[k, z] + delta * contrib[k, z]
                if t > m:
                    m = t
            s = 0.0
            for z in range(C):
                t = L[k, z] + delta * contrib[k, z]
                s += exp(t - m)
                if z == y[k]:
                    ty = t
            acc += ty - (m + log(s))
    return acc


def add_scaled(double[:, ::1] L, double[:, ::1] contrib, double delta):
    cdef Py_ssize_t N = L.shape[0], k
    cdef int C = L.shape[1], z
    with nogil:
        for k in range(N):
            for z in range(C):
                L[k, z] += delta * contrib[k, z]
