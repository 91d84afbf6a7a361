"""Pure-Python kernels. Behavioural twin of ``_kernels.pyx``.

Partition search works on *blocks*: runs of sorted instances that must stay
together (a distinct value, or a run of same-class pure values). ``counts``
is the (n_blocks, C) matrix of class counts per block, ordered by value.
A partition is given by the start block index of each part.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

BACKEND = "python"


def _part_cost(counts, lf, C: int) -> float:
    n = 0
    s = 0.0
    for z in range(C):
        n += counts[z]
        s += lf[counts[z]]
    return (lf[n + C - 1] - lf[C - 1] - lf[n]) + (lf[n] - s)


def _prior(I: int, n_total: int, n_obs: int, lf) -> float:
    return math.log(n_total) + (lf[n_obs + I - 1] - lf[I - 1] - lf[n_obs])


def partition_cost(counts: np.ndarray, starts, n_total: int, n_obs: int, lf) -> float:
    """Cost of the intervals of a partition (prior on I, boundaries, per-part terms).

    ``lf[k]`` must hold ln k! for k up to ``2 * n_obs + C``.
    """
    n, C = counts.shape
    lf = lf.tolist() if isinstance(lf, np.ndarray) else lf
    prefix = np.vstack([np.zeros((1, C), dtype=np.int64), np.cumsum(counts, axis=0)])
    bounds = list(starts) + [n]
    total = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        total += _part_cost([int(v) for v in prefix[b] - prefix[a]], lf, C)
    return _prior(len(starts), n_total, n_obs, lf) + total


def _exact(counts, n_total, n_obs, lf):
    n, C = counts.shape
    prefix = np.vstack([np.zeros((1, C), dtype=np.int64), np.cumsum(counts, axis=0)]).tolist()
    F = [[0.0] * (n + 1) for _ in range(n + 1)]
    for a in range(n):
        for b in range(a + 1, n + 1):
            F[a][b] = _part_cost([prefix[b][z] - prefix[a][z] for z in range(C)], lf, C)
    inf = math.inf
    best = [[inf] * (n + 1) for _ in range(n + 1)]
    arg = [[-1] * (n + 1) for _ in range(n + 1)]
    for b in range(1, n + 1):
        best[1][b] = F[0][b]
    for i in range(2, n + 1):
        prev = best[i - 1]
        row, arow = best[i], arg[i]
        for b in range(i, n + 1):
            v_best, l_best = inf, -1
            for l in range(i - 1, b):
                v = prev[l] + F[l][b]
                if v < v_best:
                    v_best, l_best = v, l
            row[b], arow[b] = v_best, l_best
    best_I, best_v = 1, _prior(1, n_total, n_obs, lf) + best[1][n]
    for i in range(2, n + 1):
        v = _prior(i, n_total, n_obs, lf) + best[i][n]
        if v < best_v:
            best_I, best_v = i, v
    starts = []
    b = n
    for i in range(best_I, 1, -1):
        l = arg[i][b]
        starts.append(l)
        b = l
    starts.append(0)
    return starts[::-1]


def _greedy(counts, n_total, n_obs, lf):
    n, C = counts.shape
    cnt = counts.tolist()
    fcost = [_part_cost(c, lf, C) for c in cnt]
    nxt = list(range(1, n + 1))
    prv = list(range(-1, n - 1))
    alive = [True] * n
    version = [0] * n
    heap = []

    def push(a):
        b = nxt[a]
        merged = [cnt[a][z] + cnt[b][z] for z in range(C)]
        delta = _part_cost(merged, lf, C) - fcost[a] - fcost[b]
        heapq.heappush(heap, (delta, a, b, version[a], version[b]))

    for a in range(n - 1):
        push(a)
    sumf = 0.0
    for a in range(n):
        sumf += fcost[a]
    I = n
    best_v = _prior(I, n_total, n_obs, lf) + sumf
    best_k = 0
    absorbed = []
    while heap:
        delta, a, b, va, vb = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or nxt[a] != b or version[a] != va or version[b] != vb:
            continue
        for z in range(C):
            cnt[a][z] += cnt[b][z]
        fcost[a] = _part_cost(cnt[a], lf, C)
        alive[b] = False
        nxt[a] = nxt[b]
        if nxt[b] < n:
            prv[nxt[b]] = a
        version[a] += 1
        absorbed.append(b)
        sumf += delta
        I -= 1
        v = _prior(I, n_total, n_obs, lf) + sumf
        if v <= best_v:
            best_v, best_k = v, len(absorbed)
        if prv[a] >= 0:
            push(prv[a])
        if nxt[a] < n:
            push(a)
    gone = set(absorbed[:best_k])
    return [a for a in range(n) if a not in gone]


def _post_optimize(counts, starts, lf, max_sweeps):
    n, C = counts.shape
    prefix = np.vstack([np.zeros((1, C), dtype=np.int64), np.cumsum(counts, axis=0)]).tolist()

    def f(a, b):
        return _part_cost([prefix[b][z] - prefix[a][z] for z in range(C)], lf, C)

    starts = list(starts)
    for _ in range(max_sweeps):
        moved = False
        for p in range(1, len(starts)):
            lo = starts[p - 1]
            hi = starts[p + 1] if p + 1 < len(starts) else n
            s = starts[p]
            old = f(lo, s) + f(s, hi)
            best_d, best_s = -1e-10, -1
            if s - 1 > lo:
                d = (f(lo, s - 1) + f(s - 1, hi)) - old
                if d < best_d:
                    best_d, best_s = d, s - 1
            if s + 1 < hi:
                d = (f(lo, s + 1) + f(s + 1, hi)) - old
                if d < best_d:
                    best_d, best_s = d, s + 1
            if best_s >= 0:
                starts[p] = best_s
                moved = True
        if not moved:
            break
    return starts


def optimize_partition(counts: np.ndarray, n_total: int, n_obs: int, exact_limit: int, lf):
    """Minimum-cost grouping of consecutive blocks into parts.

    Returns ``(starts, cost)``. Exact dynamic programming when there are at
    most ``exact_limit`` blocks; otherwise greedy bottom-up merging (keeping
    the best level seen down to a single part) followed by single-boundary
    moves until a fixed point.
    """
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    n, C = counts.shape
    lf = lf.tolist()
    if n <= exact_limit:
        starts = _exact(counts, n_total, n_obs, lf)
    else:
        starts = _greedy(counts, n_total, n_obs, lf)
        starts = _post_optimize(counts, starts, lf, max_sweeps=10 * n)
    return np.asarray(starts, dtype=np.int64), partition_cost(counts, starts, n_total, n_obs, lf)


def class_loglik(L: np.ndarray, y: np.ndarray) -> float:
    """Sum over rows of ln softmax(L[k])[y_k]."""
    M = L.max(axis=1)
    lse = M + np.log(np.exp(L - M[:, None]).sum(axis=1))
    return float(np.sum(L[np.arange(len(y)), y] - lse))


def class_loglik_shifted(L: np.ndarray, contrib: np.ndarray, delta: float, y: np.ndarray) -> float:
    return class_loglik(L + delta * contrib, y)


def add_scaled(L: np.ndarray, contrib: np.ndarray, delta: float) -> None:
    L += delta * contrib
