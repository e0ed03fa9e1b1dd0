"""Pure Python/numpy versions of the compiled kernels (same signatures, same results)."""

import heapq
import math

import numpy as np

_MOVES = (
    (-1, 0, 1.0),
    (1, 0, 1.0),
    (0, -1, 1.0),
    (0, 1, 1.0),
    (-1, -1, math.sqrt(2.0)),
    (-1, 1, math.sqrt(2.0)),
    (1, -1, math.sqrt(2.0)),
    (1, 1, math.sqrt(2.0)),
)


def grid_dijkstra(free, si, sj):
    free = np.asarray(free, dtype=bool)
    H, W = free.shape
    dist = np.full((H, W), np.inf)
    parent = np.full((H, W), -1, dtype=np.int64)
    if not free[si, sj]:
        return dist, parent
    fl = free.tolist()
    dl = dist.tolist()
    pl = parent.tolist()
    dl[si][sj] = 0.0
    heap = [(0.0, si * W + sj)]
    while heap:
        d, idx = heapq.heappop(heap)
        i, j = divmod(idx, W)
        if d > dl[i][j]:
            continue
        for k, (a, b, c) in enumerate(_MOVES):
            ni, nj = i + a, j + b
            if ni < 0 or ni >= H or nj < 0 or nj >= W or not fl[ni][nj]:
                continue
            if k >= 4 and (not fl[i][nj] or not fl[ni][j]):
                continue
            nd = d + c
            if nd < dl[ni][nj]:
                dl[ni][nj] = nd
                pl[ni][nj] = idx
                heapq.heappush(heap, (nd, ni * W + nj))
    return np.array(dl), np.array(pl, dtype=np.int64)


def linear_assignment(cost):
    """Shortest-augmenting-path Hungarian method with the column scan vectorized."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = np.empty(n + 1)
            cur[0] = np.inf
            cur[1:] = cost[i0 - 1] - u[i0] - v[1:]
            better = ~used & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            masked = np.where(used, np.inf, minv)
            masked[0] = np.inf
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
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
    out[p[1:] - 1] = np.arange(n)
    return out


def first_collision(pts, centers, radii, lo, hi, spacing):
    pts = np.asarray(pts, dtype=np.float64)
    for s in range(pts.shape[0] - 1):
        a, b = pts[s], pts[s + 1]
        nsub = max(1, math.ceil(math.sqrt(float(np.sum((b - a) ** 2))) / spacing))
        frac = np.arange(0 if s == 0 else 1, nsub + 1) / nsub
        samples = a[None] + frac[:, None] * (b - a)[None]
        if np.any(samples < lo) or np.any(samples > hi):
            return s
        if len(radii):
            d2 = np.sum((samples[:, None, :] - centers[None]) ** 2, axis=-1)
            if np.any(d2 <= radii[None] ** 2):
                return s
    return -1


def segment_free(free, i0, j0, i1, j1):
    di, dj = i1 - i0, j1 - j0
    n = 2 * max(abs(di), abs(dj)) + 1
    frac = np.arange(n + 1) / n
    ii = (i0 + di * frac + 0.5).astype(np.int64)
    jj = (j0 + dj * frac + 0.5).astype(np.int64)
    return bool(np.all(np.asarray(free)[ii, jj]))
