"""Domain types, trajectory arithmetic and seeded randomness."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "Rng",
    "Trajectory",
    "Task",
    "Workspace",
    "Dataset",
    "NormStats",
    "finite_differences",
    "resample",
    "normalize",
    "denormalize",
]


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise InvalidInputError("rng labels must be non-negative")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


class Rng:
    """Splittable seeded random stream.

    A child stream depends only on the parent's seed and the chain of labels
    used to derive it, never on how much of the parent has been consumed.
    """

    def __init__(self, seed: int, _path: tuple = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(_path)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, label) -> "Rng":
        return Rng(self.seed, self.path + (_label_key(label),))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"


def finite_differences(q, dt: float):
    """Velocities and accelerations of a uniformly sampled position sequence.

    Central differences in the interior, first-order one-sided at both ends;
    the acceleration is the same stencil applied to the velocity.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim not in (1, 2) or q.shape[0] < 3:
        raise InvalidInputError(f"need at least 3 samples, got shape {q.shape}")
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    if not np.all(np.isfinite(q)):
        raise InvalidInputError("positions contain non-finite entries")
    qd = np.gradient(q, dt, axis=0, edge_order=1)
    qdd = np.gradient(qd, dt, axis=0, edge_order=1)
    return qd, qdd


@dataclass(frozen=True)
class Trajectory:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    dt: float
    derived: bool = False  # qd/qdd were differenced from q rather than recorded

    def __post_init__(self):
        arrs = []
        for name in ("q", "qd", "qdd"):
            a = np.array(getattr(self, name), dtype=np.float64)
            if a.ndim == 1:
                a = a[:, None]
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrs.append(a)
        q = arrs[0]
        if q.ndim != 2 or q.shape[0] < 2 or q.shape[1] < 1:
            raise InvalidInputError(f"trajectory must be L x d with L >= 2, got {q.shape}")
        if any(a.shape != q.shape for a in arrs):
            raise InvalidInputError("q, qd, qdd shapes differ")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise InvalidInputError("trajectory contains non-finite entries")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "dt", float(self.dt))

    @classmethod
    def from_positions(cls, q, dt: float) -> "Trajectory":
        q = np.asarray(q, dtype=np.float64)
        if q.ndim == 1:
            q = q[:, None]
        qd, qdd = finite_differences(q, dt)
        return cls(q, qd, qdd, dt, derived=True)

    @property
    def length(self) -> int:
        return self.q.shape[0]

    @property
    def dim(self) -> int:
        return self.q.shape[1]

    @property
    def duration(self) -> float:
        return self.dt * (self.length - 1)

    def block(self) -> np.ndarray:
        """State block ``L x 3d`` with position, velocity, acceleration channels."""
        return np.concatenate([self.q, self.qd, self.qdd], axis=1)

    @classmethod
    def from_block(cls, block, dt: float) -> "Trajectory":
        block = np.asarray(block, dtype=np.float64)
        d = block.shape[-1] // 3
        return cls(block[:, :d], block[:, d : 2 * d], block[:, 2 * d :], dt)


@dataclass(frozen=True)
class Task:
    start: np.ndarray
    goal: np.ndarray

    def __post_init__(self):
        s = np.array(self.start, dtype=np.float64).reshape(-1)
        g = np.array(self.goal, dtype=np.float64).reshape(-1)
        if s.shape != g.shape or s.size == 0:
            raise InvalidInputError("start and goal must be vectors of equal size")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(g))):
            raise InvalidInputError("task contains non-finite entries")
        if np.array_equal(s, g):
            raise InvalidInputError("start and goal coincide")
        s.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "goal", g)

    @property
    def dim(self) -> int:
        return self.start.size

    def vector(self) -> np.ndarray:
        return np.concatenate([self.start, self.goal])

    def check_inside(self, workspace: "Workspace"):
        if not (workspace.contains(self.start) and workspace.contains(self.goal)):
            raise InvalidInputError("task endpoints lie outside the workspace bounds")


@dataclass(frozen=True)
class Workspace:
    lo: np.ndarray
    hi: np.ndarray
    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        lo = np.array(self.lo, dtype=np.float64).reshape(-1)
        hi = np.array(self.hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise InvalidInputError("bounds must be two vectors of equal size")
        if not np.all(lo < hi):
            raise InvalidInputError("workspace bounds are degenerate (need min < max)")
        c = np.array(self.centers, dtype=np.float64).reshape(-1, lo.size)
        r = np.array(self.radii, dtype=np.float64).reshape(-1)
        if c.shape[0] != r.size:
            raise InvalidInputError("one radius per obstacle center required")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("obstacle centers must be finite")
        if np.any(~(r > 0)):
            raise InvalidInputError("obstacle radii must be positive")
        for name, a in (("lo", lo), ("hi", hi), ("centers", c), ("radii", r)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def n_obstacles(self) -> int:
        return self.radii.size

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def clearance(self, points) -> np.ndarray:
        """Signed distance from each point to the nearest obstacle boundary."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.n_obstacles == 0:
            return np.full(pts.shape[0], np.inf)
        dist = np.linalg.norm(pts[:, None, :] - self.centers[None], axis=-1)
        return np.min(dist - self.radii[None], axis=1)


@dataclass(frozen=True)
class Dataset:
    workspace: Workspace
    trajectories: tuple
    tasks: tuple

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        tasks = tuple(self.tasks)
        if len(trajs) != len(tasks):
            raise InvalidInputError("one task per trajectory required")
        for i, (tr, tk) in enumerate(zip(trajs, tasks)):
            if tr.dim != self.workspace.dim:
                raise InvalidInputError(f"trajectory {i} dimension does not match the workspace")
            if not (np.array_equal(tr.q[0], tk.start) and np.array_equal(tr.q[-1], tk.goal)):
                raise InvalidInputError(f"task {i} does not match its trajectory endpoints")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "tasks", tasks)

    @classmethod
    def from_trajectories(cls, workspace: Workspace, trajectories: Sequence[Trajectory]) -> "Dataset":
        tasks = [Task(tr.q[0], tr.q[-1]) for tr in trajectories]
        return cls(workspace, tuple(trajectories), tuple(tasks))

    def __len__(self):
        return len(self.trajectories)

    def subset(self, indices) -> "Dataset":
        idx = [int(i) for i in indices]
        return Dataset(
            self.workspace,
            tuple(self.trajectories[i] for i in idx),
            tuple(self.tasks[i] for i in idx),
        )

    def blocks(self) -> np.ndarray:
        """All trajectories stacked as ``N x L x 3d`` (lengths must agree)."""
        lengths = {tr.length for tr in self.trajectories}
        if len(lengths) != 1:
            raise InvalidInputError(f"trajectory lengths differ: {sorted(lengths)}")
        return np.stack([tr.block() for tr in self.trajectories])


def resample(traj: Trajectory, n: int) -> Trajectory:
    """Linearly re-interpolate positions onto ``n`` uniform samples over the same duration."""
    if n < 2:
        raise InvalidInputError(f"need at least 2 samples, got {n}")
    L = traj.length
    if n == L:
        return traj
    src = np.linspace(0.0, 1.0, L)
    dst = np.linspace(0.0, 1.0, n)
    q = np.stack([np.interp(dst, src, traj.q[:, j]) for j in range(traj.dim)], axis=1)
    q[0], q[-1] = traj.q[0], traj.q[-1]
    dt = traj.duration / (n - 1)
    if n < 3:
        z = np.zeros_like(q)
        v = np.broadcast_to((q[1] - q[0]) / dt, q.shape)
        return Trajectory(q, v, z, dt, derived=True)
    return Trajectory.from_positions(q, dt)


@dataclass(frozen=True)
class NormStats:
    """Affine map taking the workspace box onto ``[-1, 1]^d``."""

    center: np.ndarray
    half: np.ndarray

    @classmethod
    def from_workspace(cls, ws: Workspace) -> "NormStats":
        return cls((ws.lo + ws.hi) / 2.0, (ws.hi - ws.lo) / 2.0)

    def positions(self, q):
        return (np.asarray(q, dtype=np.float64) - self.center) / self.half

    def derivatives(self, v):
        return np.asarray(v, dtype=np.float64) / self.half

    def inv_positions(self, q):
        return np.asarray(q, dtype=np.float64) * self.half + self.center

    def inv_derivatives(self, v):
        return np.asarray(v, dtype=np.float64) * self.half

    def task(self, task: Task) -> Task:
        return Task(self.positions(task.start), self.positions(task.goal))

    def inv_task(self, task: Task) -> Task:
        return Task(self.inv_positions(task.start), self.inv_positions(task.goal))

    def trajectory(self, tr: Trajectory) -> Trajectory:
        return Trajectory(
            self.positions(tr.q), self.derivatives(tr.qd), self.derivatives(tr.qdd), tr.dt, tr.derived
        )

    def inv_trajectory(self, tr: Trajectory) -> Trajectory:
        return Trajectory(
            self.inv_positions(tr.q),
            self.inv_derivatives(tr.qd),
            self.inv_derivatives(tr.qdd),
            tr.dt,
            tr.derived,
        )

    def workspace(self, ws: Workspace) -> Workspace:
        # radii scale by the mean half-extent; exact only for isotropic boxes
        return Workspace(
            self.positions(ws.lo),
            self.positions(ws.hi),
            self.positions(ws.centers) if ws.n_obstacles else np.zeros((0, ws.dim)),
            ws.radii / float(np.mean(self.half)),
        )

    def inv_workspace(self, ws: Workspace) -> Workspace:
        return Workspace(
            self.inv_positions(ws.lo),
            self.inv_positions(ws.hi),
            self.inv_positions(ws.centers) if ws.n_obstacles else np.zeros((0, ws.dim)),
            ws.radii * float(np.mean(self.half)),
        )

    def to_dict(self):
        return {"center": self.center.tolist(), "half": self.half.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["center"], dtype=np.float64), np.asarray(d["half"], dtype=np.float64))


def _map_dataset(ds: Dataset, tr_fn, ws_fn) -> Dataset:
    trajs = tuple(tr_fn(tr) for tr in ds.trajectories)
    return Dataset.from_trajectories(ws_fn(ds.workspace), trajs)


def normalize(ds: Dataset):
    if len(ds) == 0:
        raise InvalidInputError("cannot normalize an empty dataset")
    stats = NormStats.from_workspace(ds.workspace)
    return _map_dataset(ds, stats.trajectory, stats.workspace), stats


def denormalize(ds: Dataset, stats: NormStats) -> Dataset:
    return _map_dataset(ds, stats.inv_trajectory, stats.inv_workspace)
