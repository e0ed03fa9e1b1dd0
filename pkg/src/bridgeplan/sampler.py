"""Fixed-step Euler integration of the learned field from workspace noise."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import bridge as br
from .core import NormStats, Rng, Task, Trajectory, Workspace
from .errors import InvalidInputError, SamplingDivergedError

DEFAULT_SNAPSHOTS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class SamplerConfig:
    """``steps`` Euler steps of size ``1 / steps``; ``None`` fields come from the model."""

    steps: int = 100
    sigma: float | None = None
    t_clamp: float | None = None
    score_correction: bool = True
    snapshots: tuple = ()
    length: int | None = None
    pin_endpoints: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise InvalidInputError("steps must be at least 1")
        if self.sigma is not None and not self.sigma > 0:
            raise InvalidInputError("sigma must be positive")
        if any(not 0 <= s <= 1 for s in self.snapshots):
            raise InvalidInputError("snapshot times must lie in [0, 1]")

    @property
    def delta(self) -> float:
        return 1.0 / self.steps

    def to_dict(self):
        return {
            "steps": self.steps,
            "sigma": self.sigma,
            "t_clamp": self.t_clamp,
            "score_correction": self.score_correction,
            "snapshots": list(self.snapshots),
            "length": self.length,
            "pin_endpoints": self.pin_endpoints,
        }


@dataclass
class GenerationResult:
    trajectory: Trajectory | None
    task: Task
    wall_secs: float
    flow_snapshots: list = field(default_factory=list)  # (t, positions L x d) in workspace units
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class _Plan:
    spec: br.BridgeSpec
    stats: NormStats
    workspace: Workspace  # normalized noise box
    dt: float
    length: int
    d: int
    noise: tuple


def _plan(model, config: SamplerConfig) -> _Plan:
    meta = getattr(model, "meta", {}) or {}
    d = int(model.d)
    bspec = dict(meta.get("bridge", {}))
    if config.sigma is not None:
        bspec["sigma"] = config.sigma
    if config.t_clamp is not None:
        bspec["t_clamp"] = config.t_clamp
    spec = br.BridgeSpec(**bspec)
    if "norm" in meta:
        stats = NormStats.from_dict(meta["norm"])
    else:
        stats = NormStats(np.zeros(d), np.ones(d))
    lo, hi = meta.get("bounds", [[-1.0] * d, [1.0] * d])
    ws = Workspace(np.asarray(lo, float), np.asarray(hi, float))
    length = int(config.length or meta.get("length", 64))
    base_len = int(meta.get("length", length))
    dt = float(meta.get("dt", 1.0 / (base_len - 1))) * (base_len - 1) / (length - 1)
    noise = tuple(meta.get("noise", (1.0, 1.0)))
    return _Plan(spec, stats, ws, dt, length, d, noise)


def sampling_field(model, t, state, task_vec, spec: br.BridgeSpec, score_correction=True):
    """Velocity used by the sampler: drift minus half sigma^2 times the raw score."""
    drift, scaled = model.predict(np.full(state.shape[0], t), state, task_vec)
    if not (spec.stochastic and score_correction):
        return drift
    std = float(br.bridge_std(t, spec))
    return drift - 0.5 * spec.sigma**2 * (scaled / std)


def _pinned_rows(x0, task_vec, spec: br.BridgeSpec):
    """Endpoints pairing the first and last noise rows with the known start and goal positions."""
    d = x0.shape[2] // 3
    rows = x0[:, [0, -1], :]
    data = np.zeros_like(rows)
    data[:, 0, :d], data[:, 1, :d] = task_vec[:, :d], task_vec[:, d:]
    return br.BridgeEndpoints(rows, data)


def integrate(model, x0, task_vec, spec: br.BridgeSpec, steps: int, score_correction=True, snapshots=(), pin=False):
    """Euler-integrate ``x0`` (B, L, 3d) over ``t_i = i / steps``; fields are evaluated at clamped times.

    With ``pin`` the positions of the first and last rows are overwritten after
    every step by their bridge mean towards the task start and goal, so the
    plan ends exactly on the requested endpoints.

    Returns the terminal state and a list of ``(t, state)`` at the grid points
    closest to each requested snapshot time.
    """
    x = np.array(x0, dtype=np.float64)
    ends = _pinned_rows(x, np.asarray(task_vec, dtype=np.float64), spec) if pin else None
    d = x.shape[2] // 3
    delta = 1.0 / steps
    snap_idx = {int(round(s * steps)): s for s in snapshots}
    snaps = []
    for i in range(steps):
        if i in snap_idx:
            snaps.append((i / steps, x.copy()))
        t = float(spec.clamp(i * delta))
        x = x + delta * sampling_field(model, t, x, task_vec, spec, score_correction)
        if ends is not None:
            x[:, [0, -1], :d] = br.marginal((i + 1) * delta, ends, spec)[0][..., :d]
        if not np.all(np.isfinite(x)):
            raise SamplingDivergedError(f"state became non-finite at step {i}", step=i)
    if steps in snap_idx:
        snaps.append((1.0, x.copy()))
    return x, snaps


def generate(model, task: Task, config: SamplerConfig, rng: Rng, init=None) -> GenerationResult:
    """Plan one trajectory for ``task`` (workspace units) starting from noise.

    ``init`` replaces the workspace-noise initial block (normalized units,
    shape ``(L, 3d)``).
    """
    plan = _plan(model, config)
    if task.dim != plan.d:
        raise InvalidInputError(f"task dimension {task.dim} does not match the model ({plan.d})")
    ntask = plan.stats.task(task)
    if not (plan.workspace.contains(ntask.start) and plan.workspace.contains(ntask.goal)):
        raise InvalidInputError("task endpoints lie outside the workspace")
    task_vec = ntask.vector()[None, :]
    if init is None:
        x0 = br.sample_noise((1, plan.length, plan.d), plan.workspace, rng, *plan.noise)
    else:
        x0 = np.asarray(init, dtype=np.float64).reshape(1, plan.length, 3 * plan.d)
    start = time.perf_counter()
    x, snaps = integrate(model, x0, task_vec, plan.spec, config.steps, config.score_correction, config.snapshots, config.pin_endpoints)
    traj = plan.stats.inv_trajectory(Trajectory.from_block(x[0], plan.dt))
    wall = time.perf_counter() - start
    snaps = [(t, plan.stats.inv_positions(s[0, :, : plan.d])) for t, s in snaps]
    return GenerationResult(traj, task, wall, snaps)


def batch_generate(model, tasks, config: SamplerConfig, rng: Rng):
    """Run :func:`generate` per task with stream ``rng.child(i)``; failures become results with ``error`` set."""
    out = []
    for i, task in enumerate(tasks):
        try:
            out.append(generate(model, task, config, rng.child(i)))
        except (SamplingDivergedError, InvalidInputError) as exc:
            out.append(GenerationResult(None, task, 0.0, [], error=str(exc)))
    return out
