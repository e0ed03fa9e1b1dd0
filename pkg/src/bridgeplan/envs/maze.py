"""Point-mass maze: random circular obstacles and a grid-search expert.

The expert pipeline for one start/goal pair:

1. shortest 8-connected path on an occupancy grid whose obstacles are
   inflated by a safety margin (optionally through a random via cell, which
   gives different experts for the same task different routes);
2. greedy line-of-sight shortcutting of the grid path;
3. a cubic spline through the remaining waypoints, parameterized by chord length;
4. minimum-jerk timing along the spline's arc length, sampled at ``L`` points.

Candidates that fail the evaluation-time feasibility check are rejected and
re-planned with denser waypoints.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .. import _kernels
from ..core import Dataset, Rng, Task, Trajectory, Workspace
from ..errors import GenerationError, InvalidInputError
from ..metrics import feasibility


@dataclass(frozen=True)
class MazeSpec:
    lo: tuple = (0.0, 0.0)
    hi: tuple = (10.0, 10.0)
    n_obstacles: int = 5
    radius_range: tuple = (0.8, 1.6)
    n_tasks: int = 8
    experts_per_task: int = 10
    length: int = 64
    duration: float = 5.0
    grid: int = 256
    inflation: float = 0.02  # fraction of the diagonal
    min_task_frac: float = 0.3  # minimum start-goal distance as a fraction of the diagonal
    task_jitter: float = 0.02  # per-expert start/goal perturbation radius, fraction of the diagonal
    via_slack: tuple = (1.0, 1.25)
    max_retries: int = 50
    seed: int = 0

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "radius_range", tuple(float(v) for v in self.radius_range))
        object.__setattr__(self, "via_slack", tuple(float(v) for v in self.via_slack))
        if len(lo) != 2 or len(hi) != 2 or not all(a < b for a, b in zip(lo, hi)):
            raise InvalidInputError("maze bounds must be a 2-D box with lo < hi")
        if self.n_obstacles < 0 or self.n_tasks < 1 or self.experts_per_task < 1:
            raise InvalidInputError("obstacle/task/expert counts out of range")
        r0, r1 = self.radius_range
        if not 0 < r0 <= r1:
            raise InvalidInputError("radius range must satisfy 0 < min <= max")
        if self.length < 3 or self.duration <= 0 or self.grid < 16:
            raise InvalidInputError("length >= 3, duration > 0 and grid >= 16 required")
        if not 0 < self.min_task_frac < 1:
            raise InvalidInputError("min_task_frac must lie in (0, 1)")

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


class OccupancyGrid:
    """Cell-centred grid over the workspace with obstacles inflated by ``margin``."""

    def __init__(self, ws: Workspace, n: int, margin: float):
        self.ws, self.n, self.margin = ws, n, margin
        self.cell = (ws.hi - ws.lo) / n
        ax = [ws.lo[k] + (np.arange(n) + 0.5) * self.cell[k] for k in range(2)]
        X, Y = np.meshgrid(ax[0], ax[1], indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        clear = ws.clearance(pts).reshape(n, n)
        edge = np.minimum(np.minimum(X - ws.lo[0], ws.hi[0] - X), np.minimum(Y - ws.lo[1], ws.hi[1] - Y))
        self.free = (clear > margin) & (edge > margin)

    def cell_of(self, p):
        idx = np.floor((np.asarray(p, dtype=np.float64) - self.ws.lo) / self.cell).astype(int)
        return tuple(np.clip(idx, 0, self.n - 1))

    def center(self, cells):
        return self.ws.lo + (np.asarray(cells, dtype=np.float64) + 0.5) * self.cell

    def connected(self) -> bool:
        _, n = ndimage.label(self.free, structure=np.ones((3, 3), dtype=int))
        return n == 1

    def point_ok(self, p, extra=0.0) -> bool:
        p = np.asarray(p, dtype=np.float64)
        lo, hi = self.ws.lo + self.margin + extra, self.ws.hi - self.margin - extra
        if np.any(p < lo) or np.any(p > hi):
            return False
        if self.ws.clearance(p)[0] <= self.margin + extra:
            return False
        return bool(self.free[self.cell_of(p)])


def _backtrack(parent, cell, n):
    out = []
    idx = cell[0] * n + cell[1]
    while idx >= 0:
        out.append(divmod(int(idx), n))
        idx = parent.flat[idx]
    return out[::-1]


def sample_obstacles(spec: MazeSpec, rng: Rng) -> Workspace:
    lo, hi = np.array(spec.lo), np.array(spec.hi)
    r = rng.uniform(spec.radius_range[0], spec.radius_range[1], size=spec.n_obstacles)
    c = lo + r[:, None] + rng.uniform(0.0, 1.0, size=(spec.n_obstacles, 2)) * ((hi - lo) - 2 * r[:, None])
    return Workspace(lo, hi, c.reshape(-1, 2), r)


def grid_path(grid: OccupancyGrid, start, goal, rng: Rng | None = None, slack=(1.0, 1.0)):
    """Grid cells from ``start`` to ``goal``; with ``rng``, routed through a random via cell."""
    s, g = grid.cell_of(start), grid.cell_of(goal)
    ds, ps = _kernels.grid_dijkstra(grid.free, s)
    best = ds[g]
    if not np.isfinite(best):
        return None
    if rng is None or slack[1] <= 1.0:
        return _backtrack(ps, g, grid.n)
    dg, pg = _kernels.grid_dijkstra(grid.free, g)
    lim = rng.uniform(slack[0], slack[1]) * best
    total = ds + dg
    cand = np.flatnonzero(((total <= lim) & (ds >= 0.3 * best) & (ds <= 0.7 * best)).ravel())
    if cand.size == 0:
        return _backtrack(ps, g, grid.n)
    via = divmod(int(cand[rng.integers(0, cand.size)]), grid.n)
    first = _backtrack(ps, via, grid.n)
    second = _backtrack(pg, via, grid.n)[::-1]
    return first + second[1:]


def shortcut(grid: OccupancyGrid, cells):
    """Greedy line-of-sight pruning: keep the farthest visible cell from each kept cell."""
    keep = [0]
    i = 0
    last = len(cells) - 1
    while i < last:
        j = last
        while j > i + 1 and not _kernels.segment_free(grid.free, cells[i], cells[j]):
            j -= 1
        keep.append(j)
        i = j
    return [cells[k] for k in keep]


def _dedupe(points):
    keep = [0]
    for k in range(1, len(points)):
        if np.linalg.norm(points[k] - points[keep[-1]]) > 1e-9:
            keep.append(k)
    return points[keep]


def min_jerk_profile(n):
    """Normalized arc-length fraction at ``n`` uniform times (zero boundary velocity and acceleration)."""
    tau = np.linspace(0.0, 1.0, n)
    return 10 * tau**3 - 15 * tau**4 + 6 * tau**5


def smooth_trajectory(waypoints, length, duration, dense=2000):
    """Spline through ``waypoints`` retimed with the minimum-jerk profile."""
    pts = _dedupe(np.asarray(waypoints, dtype=np.float64))
    if len(pts) < 2:
        raise InvalidInputError("need two distinct waypoints")
    chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    if len(pts) == 2:
        u = np.linspace(0.0, chord[-1], dense)
        curve = pts[0] + (u / chord[-1])[:, None] * (pts[1] - pts[0])
    else:
        cs = CubicSpline(chord, pts, bc_type="natural")
        curve = cs(np.linspace(0.0, chord[-1], dense))
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(curve, axis=0), axis=1))])
    s = min_jerk_profile(length) * arc[-1]
    q = np.stack([np.interp(s, arc, curve[:, k]) for k in range(curve.shape[1])], axis=1)
    q[0], q[-1] = pts[0], pts[-1]
    return Trajectory.from_positions(q, duration / (length - 1))


def plan_expert(grid: OccupancyGrid, task: Task, spec: MazeSpec, rng: Rng | None = None):
    """One verified expert trajectory for ``task`` or ``None`` if every candidate fails."""
    slack = spec.via_slack if grid.ws.n_obstacles else (1.0, 1.0)
    cells = grid_path(grid, task.start, task.goal, rng, slack)
    if cells is None:
        return None
    inner = grid.center(cells)
    short = grid.center(shortcut(grid, cells))
    candidates = [short]
    for stride in (24, 12, 6, 3):
        candidates.append(inner[::stride])
    for way in candidates:
        way = np.vstack([task.start, way[1:-1], task.goal]) if len(way) > 2 else np.vstack([task.start, task.goal])
        tr = smooth_trajectory(way, spec.length, spec.duration)
        if feasibility(tr, task, grid.ws).success:
            return tr
    return None


def _sample_point(grid, rng, extra, tries=2000):
    lo, hi = grid.ws.lo, grid.ws.hi
    for _ in range(tries):
        p = lo + rng.uniform(0.0, 1.0, size=2) * (hi - lo)
        if grid.point_ok(p, extra):
            return p
    return None


def _sample_task(grid, spec, rng, extra):
    diag = grid.ws.diagonal
    for _ in range(200):
        s = _sample_point(grid, rng, extra)
        g = _sample_point(grid, rng, extra)
        if s is None or g is None:
            return None
        if np.linalg.norm(g - s) >= spec.min_task_frac * diag:
            return Task(s, g)
    return None


def _jitter(grid, p, radius, rng, extra):
    for _ in range(200):
        ang = rng.uniform(0.0, 2 * np.pi)
        rad = radius * np.sqrt(rng.uniform())
        q = p + rad * np.array([np.cos(ang), np.sin(ang)])
        if grid.point_ok(q, extra):
            return q
    return p


def _build(spec: MazeSpec, rng: Rng):
    ws = sample_obstacles(spec, rng.child("obstacles"))
    diag = ws.diagonal
    grid = OccupancyGrid(ws, spec.grid, spec.inflation * diag)
    if not grid.connected():
        return None
    extra = float(np.max(grid.cell)) * 2
    trajs = []
    for k in range(spec.n_tasks):
        trng = rng.child("task").child(k)
        base = _sample_task(grid, spec, trng.child("endpoints"), extra + spec.task_jitter * diag)
        if base is None or grid_path(grid, base.start, base.goal) is None:
            return None
        for e in range(spec.experts_per_task):
            erng = trng.child("expert").child(e)
            for attempt in range(10):
                arng = erng.child(attempt)
                s = _jitter(grid, base.start, spec.task_jitter * diag, arng, extra)
                g = _jitter(grid, base.goal, spec.task_jitter * diag, arng, extra)
                if np.linalg.norm(g - s) < spec.min_task_frac * diag:
                    continue
                tr = plan_expert(grid, Task(s, g), spec, arng.child("via"))
                if tr is not None:
                    trajs.append(tr)
                    break
            else:
                return None
    return Dataset.from_trajectories(ws, trajs)


def generate_maze_dataset(spec: MazeSpec, rng: Rng | None = None) -> Dataset:
    """Maze workspace plus ``n_tasks * experts_per_task`` verified experts (task-major order)."""
    rng = rng or Rng(spec.seed)
    for attempt in range(spec.max_retries):
        ds = _build(spec, rng.child("layout").child(attempt))
        if ds is not None:
            return ds
    raise GenerationError(f"no connected maze with plannable tasks after {spec.max_retries} layouts")


def split_tasks(ds: Dataset, held_out_fraction: float, rng: Rng):
    """Disjoint random split by task into ``(train, held_out)`` datasets.

    Only the held-out tasks drive generation; its trajectories serve as the
    reference set for distribution metrics.
    """
    if not 0 < held_out_fraction < 1:
        raise InvalidInputError("held_out_fraction must lie in (0, 1)")
    n = len(ds)
    k = int(round(held_out_fraction * n))
    if k < 1 or k >= n:
        raise InvalidInputError(f"fraction {held_out_fraction} leaves an empty side for {n} tasks")
    perm = rng.permutation(n)
    held = sorted(int(i) for i in perm[:k])
    train = sorted(int(i) for i in perm[k:])
    return ds.subset(train), ds.subset(held)
