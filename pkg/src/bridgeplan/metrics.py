"""Trajectory quality metrics and the evaluation harness."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from . import bridge as br
from .core import NormStats, Rng, Task, Trajectory, Workspace
from .errors import InvalidInputError
from .sampler import SamplerConfig, batch_generate

GOAL_TOL_FRACTION = 0.02


@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel; ``bandwidth=None`` selects the median heuristic on the pooled set."""

    kind: str = "rbf"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind != "rbf":
            raise InvalidInputError(f"unsupported kernel {self.kind!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise InvalidInputError("bandwidth must be positive")


def _flat_positions(trajs):
    if isinstance(trajs, np.ndarray):
        arr = np.asarray(trajs, dtype=np.float64)
        if arr.ndim == 2:
            return arr
        return arr.reshape(arr.shape[0], -1)
    if len(trajs) == 0:
        raise InvalidInputError("trajectory set is empty")
    return np.stack([np.asarray(tr.q if isinstance(tr, Trajectory) else tr, dtype=np.float64).ravel() for tr in trajs])


def _sqdist(a, b):
    d = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def median_bandwidth(X, Y):
    Z = np.concatenate([X, Y])
    d2 = _sqdist(Z, Z)
    iu = np.triu_indices(Z.shape[0], k=1)
    med = float(np.median(np.sqrt(d2[iu]))) if iu[0].size else 0.0
    return med if med > 0 else 1.0


def mmd(gen, expert, kernel: KernelSpec = KernelSpec()) -> float:
    """Biased squared MMD between two sets of trajectories on flattened positions."""
    X = _flat_positions(gen)
    Y = _flat_positions(expert)
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise InvalidInputError("both trajectory sets must be nonempty")
    if X.shape[1] != Y.shape[1]:
        raise InvalidInputError("trajectory sets differ in length or dimension; resample first")
    h = kernel.bandwidth or median_bandwidth(X, Y)
    g = 1.0 / (2.0 * h * h)
    kxx = np.exp(-g * _sqdist(X, X)).mean()
    kyy = np.exp(-g * _sqdist(Y, Y)).mean()
    kxy = np.exp(-g * _sqdist(X, Y)).mean()
    return float(kxx + kyy - 2.0 * kxy)


def trajectory_jerkiness(traj: Trajectory) -> float:
    """Left Riemann sum of the squared acceleration norm (integrated squared acceleration)."""
    a = traj.qdd[:-1]
    return float(np.sum(a * a) * traj.dt)


def energy_consumption(traj: Trajectory) -> float:
    """Left Riemann sum of the squared velocity norm."""
    v = traj.qd[:-1]
    return float(np.sum(v * v) * traj.dt)


@dataclass(frozen=True)
class Verdict:
    goal_reached: bool
    collision_free: bool
    goal_error: float
    first_collision: int = -1

    @property
    def success(self) -> bool:
        return self.goal_reached and self.collision_free

    def to_dict(self):
        return {**asdict(self), "success": self.success}


def default_goal_tol(workspace: Workspace) -> float:
    return GOAL_TOL_FRACTION * workspace.diagonal


def check_spacing(workspace: Workspace) -> float:
    """Sub-sampling distance along segments: a quarter of the smallest obstacle radius."""
    if workspace.n_obstacles:
        return float(np.min(workspace.radii)) / 4.0
    return workspace.diagonal / 200.0


def feasibility(traj: Trajectory, task: Task, workspace: Workspace, goal_tol: float | None = None) -> Verdict:
    tol = default_goal_tol(workspace) if goal_tol is None else float(goal_tol)
    err = float(np.linalg.norm(traj.q[-1] - task.goal))
    hit = _kernels.first_collision(
        traj.q, workspace.centers, workspace.radii, workspace.lo, workspace.hi, check_spacing(workspace)
    )
    return Verdict(err <= tol, hit < 0, err, hit)


def noise_trajectories(workspace: Workspace, n: int, length: int, rng: Rng):
    """Position sequences drawn i.i.d. uniformly from the workspace box (an uninformed reference set)."""
    stats = NormStats.from_workspace(workspace)
    block = br.sample_noise((n, length, workspace.dim), stats.workspace(workspace), rng)
    return stats.inv_positions(block[..., : workspace.dim])


def _mean_std(values):
    if not values:
        return float("nan"), float("nan")
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())


@dataclass
class EvalReport:
    mmd: float
    tj_mean: float
    tj_std: float
    ec_mean: float
    ec_std: float
    successes: int
    total: int
    verdicts: list = field(default_factory=list)
    plan_time_mean: float = float("nan")
    plan_time_std: float = float("nan")
    errors: list = field(default_factory=list)

    @property
    def feasibility(self) -> str:
        return f"{self.successes}/{self.total}"

    def finite(self) -> bool:
        vals = [self.mmd, self.tj_mean, self.tj_std, self.ec_mean, self.ec_std]
        return all(math.isfinite(v) for v in vals)

    def to_dict(self, timing=False):
        d = {
            "mmd": self.mmd,
            "tj_mean": self.tj_mean,
            "tj_std": self.tj_std,
            "ec_mean": self.ec_mean,
            "ec_std": self.ec_std,
            "feasibility": self.feasibility,
            "successes": self.successes,
            "total": self.total,
            "verdicts": self.verdicts,
            "errors": self.errors,
        }
        if timing:
            d["plan_time_mean"] = self.plan_time_mean
            d["plan_time_std"] = self.plan_time_std
        return d


def summarize(trajs, tasks, experts, workspace: Workspace, kernel=KernelSpec(), goal_tol=None, times=None, errors=None):
    """Metrics for already generated trajectories; ``None`` entries count as failures."""
    verdicts, tj, ec, ok = [], [], [], []
    for tr, task in zip(trajs, tasks):
        if tr is None:
            verdicts.append(None)
            continue
        v = feasibility(tr, task, workspace, goal_tol)
        verdicts.append(v.to_dict())
        tj.append(trajectory_jerkiness(tr))
        ec.append(energy_consumption(tr))
        ok.append(tr)
    m = mmd(ok, experts, kernel) if ok else float("nan")
    succ = sum(1 for v in verdicts if v is not None and v["success"])
    tjm, tjs = _mean_std(tj)
    ecm, ecs = _mean_std(ec)
    tm, ts = _mean_std(list(times or []))
    return EvalReport(m, tjm, tjs, ecm, ecs, succ, len(verdicts), verdicts, tm, ts, list(errors or []))


def evaluate(model, dataset, n_tasks: int, config: SamplerConfig, rng: Rng, kernel=KernelSpec(), goal_tol=None):
    """Generate for the first ``n_tasks`` tasks of ``dataset`` and score them against its trajectories."""
    if not 1 <= n_tasks <= len(dataset):
        raise InvalidInputError(f"n_tasks must lie in [1, {len(dataset)}]")
    tasks = list(dataset.tasks[:n_tasks])
    experts = list(dataset.trajectories[:n_tasks])
    results = batch_generate(model, tasks, config, rng)
    trajs = [r.trajectory for r in results]
    errors = [{"index": i, "error": r.error} for i, r in enumerate(results) if r.error]
    times = [r.wall_secs for r in results if r.ok]
    return summarize(trajs, tasks, experts, dataset.workspace, kernel, goal_tol, times, errors), results
