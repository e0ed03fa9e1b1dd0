"""Brownian-bridge marginals, regression targets, couplings and noise.

States are *blocks*: arrays whose last axis stacks position, velocity and
acceleration channels (``3 * d`` entries).  Flow time ``t`` may be a scalar or
an array over the leading (batch) axis.

For the Schrödinger-bridge family the conditional marginal is
``N(mu_t, sigma^2 t (1 - t))``.  Three fields live on it:

* ``target_flow``  -- the probability-flow velocity
  ``mu_dot + a(t) (x - mu)`` with ``a(t) = (1 - 2t) / (2 t (1 - t))``;
* ``target_score`` -- ``(mu - x) / var``;
* ``target_drift`` -- the SDE drift ``flow + sigma^2 / 2 * score``, which is
  what the drift head regresses so that ``drift - sigma^2 / 2 * score``
  recovers the flow at sampling time.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .core import Rng, Task, Workspace
from .errors import InvalidInputError, SingularTimeError

SB = "sb"
CFM = "cfm"
TRIG = "trig"
OTCFM = "otcfm"
FAMILIES = (SB, CFM, TRIG, OTCFM)

_FAMILY_ALIASES = {
    "schrodingerbridge": SB,
    "linearcfm": CFM,
    "triginterpolant": TRIG,
}


@dataclass(frozen=True)
class BridgeSpec:
    sigma: float = 0.5
    order: int = 2
    t_clamp: float = 1e-3
    family: str = SB
    sigma_min: float = 1e-2

    def __post_init__(self):
        fam = _FAMILY_ALIASES.get(str(self.family).lower(), str(self.family).lower())
        if fam not in FAMILIES:
            raise InvalidInputError(f"unknown bridge family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not self.sigma > 0:
            raise InvalidInputError("sigma must be positive")
        if not 0 < self.t_clamp < 0.5:
            raise InvalidInputError("t_clamp must lie in (0, 0.5)")
        if self.order not in (1, 2, 3):
            raise InvalidInputError("order must be 1, 2 or 3")
        if not self.sigma_min >= 0:
            raise InvalidInputError("sigma_min must be non-negative")

    @property
    def stochastic(self) -> bool:
        """Whether the family carries a score (only the Schrödinger bridge does)."""
        return self.family == SB

    @property
    def coupling(self) -> str:
        return "minibatch_ot" if self.family == OTCFM else "independent"

    def clamp(self, t):
        return np.clip(t, self.t_clamp, 1.0 - self.t_clamp)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BridgeEndpoints:
    """Paired noise block ``x0`` and expert block ``x1`` (same shape, last axis 3d)."""

    x0: np.ndarray
    x1: np.ndarray
    task: Task | None = None

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=np.float64)
        x1 = np.asarray(self.x1, dtype=np.float64)
        if x0.shape != x1.shape or x0.ndim == 0 or x0.shape[-1] % 3:
            raise InvalidInputError(f"endpoint blocks must share a shape with last axis 3d, got {x0.shape}, {x1.shape}")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "x1", x1)

    @classmethod
    def from_parts(cls, eps_q, q1, eps_qd=None, eps_qdd=None, qd1=None, qdd1=None, task=None):
        eps_q = np.atleast_1d(np.asarray(eps_q, dtype=np.float64))
        q1 = np.atleast_1d(np.asarray(q1, dtype=np.float64))

        def fill(a, like):
            return np.zeros_like(like) if a is None else np.broadcast_to(np.asarray(a, dtype=np.float64), like.shape)

        x0 = np.concatenate([eps_q, fill(eps_qd, eps_q), fill(eps_qdd, eps_q)], axis=-1)
        x1 = np.concatenate([q1, fill(qd1, q1), fill(qdd1, q1)], axis=-1)
        return cls(x0, x1, task)

    @property
    def d(self) -> int:
        return self.x0.shape[-1] // 3


@dataclass(frozen=True)
class BridgeTargets:
    x_t: np.ndarray
    drift: np.ndarray
    score: np.ndarray
    scaled_score: np.ndarray
    mean: np.ndarray
    var: np.ndarray


def _bt(t, like):
    """Broadcast flow time against a block of shape ``like``."""
    t = np.asarray(t, dtype=np.float64)
    return t.reshape(t.shape + (1,) * (like.ndim - t.ndim))


def _position_coeffs(t, order):
    """Weights of (eps_q, eps_qd, eps_qdd, q1) in the order-k position mean and their time derivatives."""
    if order == 1:
        w = (1 - t, 0 * t, 0 * t, t)
        dw = (-1 + 0 * t, 0 * t, 0 * t, 1 + 0 * t)
    elif order == 2:
        w = (1 - t**2, t - t**2, 0 * t, t**2)
        dw = (-2 * t, 1 - 2 * t, 0 * t, 2 * t)
    else:
        w = (1 - t**3, t - t**3, (t**2 - t**3) / 2, t**3)
        dw = (-3 * t**2, 1 - 3 * t**2, (2 * t - 3 * t**2) / 2, 3 * t**2)
    return w, dw


def _mean_and_rate(t, ep: BridgeEndpoints, spec: BridgeSpec):
    x0, x1, d = ep.x0, ep.x1, ep.d
    tb = _bt(t, x0)
    if spec.family == TRIG:
        c, s = np.cos(np.pi * tb / 2), np.sin(np.pi * tb / 2)
        return c * x0 + s * x1, (np.pi / 2) * (c * x1 - s * x0)
    # velocity and acceleration channels follow the straight path
    mean = (1 - tb) * x0 + tb * x1
    rate = np.broadcast_to(x1 - x0, mean.shape).copy()
    if spec.family == SB and spec.order > 1:
        (a, b, c, e), (da, db, dc, de) = _position_coeffs(tb, spec.order)
        eq, eqd, eqdd, q1 = x0[..., :d], x0[..., d : 2 * d], x0[..., 2 * d :], x1[..., :d]
        mean[..., :d] = a * eq + b * eqd + c * eqdd + e * q1
        rate[..., :d] = da * eq + db * eqd + dc * eqdd + de * q1
    return mean, rate


def bridge_var(t, spec: BridgeSpec):
    t = np.asarray(t, dtype=np.float64)
    if spec.family == SB:
        return spec.sigma**2 * t * (1 - t)
    if spec.family in (CFM, OTCFM):
        return np.full_like(t, spec.sigma_min**2)
    return np.zeros_like(t)


def bridge_std(t, spec: BridgeSpec):
    return np.sqrt(bridge_var(t, spec))


def transport_weight(t):
    """Bridge weighting ``(1 - 2t) / (2 t (1 - t))`` of the probability-flow field."""
    t = np.asarray(t, dtype=np.float64)
    return (1 - 2 * t) / (2 * t * (1 - t))


def marginal(t, ep: BridgeEndpoints, spec: BridgeSpec):
    """Mean block and (per-sample) variance of the conditional marginal at ``t``."""
    mean, _ = _mean_and_rate(t, ep, spec)
    return mean, bridge_var(t, spec)


def mean_rate(t, ep: BridgeEndpoints, spec: BridgeSpec):
    return _mean_and_rate(t, ep, spec)[1]


def _check_time(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > 1):
        raise InvalidInputError("flow time must lie in [0, 1]")
    return t


def _check_interior(t, spec):
    t = _check_time(t)
    if spec.family == SB and (np.any(t <= 0) or np.any(t >= 1)):
        raise SingularTimeError("bridge fields are singular at t in {0, 1}; clamp the flow time")
    return t


def interpolate(t, ep: BridgeEndpoints, spec: BridgeSpec, rng: Rng | None = None, z=None):
    """Draw ``x_t`` from the conditional marginal (``z`` overrides the rng draw)."""
    t = _check_time(t)
    mean, var = marginal(t, ep, spec)
    if spec.family == TRIG:
        return mean
    if z is None:
        if rng is None:
            raise InvalidInputError("interpolate needs an rng or an explicit z")
        z = rng.normal(mean.shape)
    return mean + _bt(np.sqrt(var), mean) * z


def target_flow(t, x, ep: BridgeEndpoints, spec: BridgeSpec):
    """Probability-flow velocity: deterministic transport that preserves the marginals."""
    t = _check_interior(t, spec)
    mean, rate = _mean_and_rate(t, ep, spec)
    if spec.family != SB:
        return rate
    return rate + _bt(transport_weight(t), mean) * (np.asarray(x, dtype=np.float64) - mean)


def target_score(t, x, ep: BridgeEndpoints, spec: BridgeSpec):
    """Score of the conditional marginal, ``(mu - x) / var``."""
    t = _check_time(t)
    mean, var = marginal(t, ep, spec)
    if np.any(var <= 0):
        raise SingularTimeError("score undefined where the bridge variance vanishes")
    return (mean - np.asarray(x, dtype=np.float64)) / _bt(var, mean)


def target_scaled_score(t, x, ep: BridgeEndpoints, spec: BridgeSpec):
    """Score times the bridge standard deviation, ``(mu - x) / std`` (unit scale)."""
    t = _check_time(t)
    mean, var = marginal(t, ep, spec)
    if np.any(var <= 0):
        raise SingularTimeError("score undefined where the bridge variance vanishes")
    return (mean - np.asarray(x, dtype=np.float64)) / _bt(np.sqrt(var), mean)


def target_drift(t, x, ep: BridgeEndpoints, spec: BridgeSpec):
    """Drift of the conditional bridge SDE ``dx = drift dt + sigma dW``.

    Equals ``mu_dot - (x - mu) / (1 - t)``; baselines without a score return
    their conditional velocity.
    """
    t = _check_interior(t, spec)
    mean, rate = _mean_and_rate(t, ep, spec)
    if spec.family != SB:
        return rate
    return rate - (np.asarray(x, dtype=np.float64) - mean) / _bt(1 - t, mean)


def targets(t, x, ep: BridgeEndpoints, spec: BridgeSpec) -> BridgeTargets:
    t = _check_interior(t, spec)
    mean, rate = _mean_and_rate(t, ep, spec)
    var = bridge_var(t, spec)
    x = np.asarray(x, dtype=np.float64)
    if spec.family == SB:
        tb = _bt(t, mean)
        drift = rate - (x - mean) / (1 - tb)
        score = (mean - x) / _bt(var, mean)
        scaled = (mean - x) / _bt(np.sqrt(var), mean)
    else:
        drift = rate
        score = np.zeros_like(mean)
        scaled = np.zeros_like(mean)
    return BridgeTargets(x, drift, score, scaled, mean, var)


def couple(batch0, batch1, mode: str = "independent"):
    """Permutation ``perm`` so that ``batch0[perm[i]]`` is paired with ``batch1[i]``.

    ``minibatch_ot`` solves the assignment problem on squared Euclidean
    distances between the position channels.
    """
    b0 = np.asarray(batch0, dtype=np.float64)
    b1 = np.asarray(batch1, dtype=np.float64)
    if b0.shape[0] != b1.shape[0] or b0.shape[0] < 1:
        raise InvalidInputError(f"batch sizes differ or are empty: {b0.shape[0]} vs {b1.shape[0]}")
    n = b0.shape[0]
    if mode == "independent":
        return np.arange(n)
    if mode != "minibatch_ot":
        raise InvalidInputError(f"unknown coupling mode {mode!r}")
    if b0.ndim == 3:
        # (B, L, 3d) state blocks: match on positions only
        d = b0.shape[-1] // 3
        b0, b1 = b0[..., :d], b1[..., :d]
    f0 = b0.reshape(n, -1)
    f1 = b1.reshape(n, -1)
    cost = np.sum((f1[:, None, :] - f0[None, :, :]) ** 2, axis=-1)
    return _kernels.linear_assignment(cost)


def sample_noise(shape, workspace: Workspace, rng: Rng, vel_scale: float = 1.0, acc_scale: float = 1.0):
    """Noise block ``(B, L, 3d)``: positions uniform in the normalized box, derivatives Gaussian."""
    B, L, d = shape
    if workspace.dim != d:
        raise InvalidInputError("noise dimension does not match the workspace")
    q = workspace.lo + (workspace.hi - workspace.lo) * rng.uniform(0.0, 1.0, size=(B, L, d))
    qd = vel_scale * rng.normal((B, L, d))
    qdd = acc_scale * rng.normal((B, L, d))
    return np.concatenate([q, qd, qdd], axis=-1)
