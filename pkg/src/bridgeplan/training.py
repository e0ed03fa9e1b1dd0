"""Minibatch training of the drift and score heads on analytic bridge targets."""

from __future__ import annotations

import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bridge as br
from .core import Dataset, NormStats, Rng, normalize
from .errors import DivergedTrainingError, InvalidInputError
from .nn import checkpoint
from .nn.model import ArchSpec, FieldModel

SCHEDULERS = ("sigma2", "constant")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    scheduler: str = "sigma2"
    seed: int = 0
    bridge: br.BridgeSpec = field(default_factory=br.BridgeSpec)
    coupling: str | None = None
    arch: ArchSpec = field(default_factory=ArchSpec)
    steps_per_epoch: int | None = None
    grad_clip: float | None = None
    vel_noise: float = 1.0
    acc_noise: float = 1.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be at least 1")
        if not self.lr > 0:
            raise InvalidInputError("learning rate must be positive")
        if self.scheduler not in SCHEDULERS:
            raise InvalidInputError(f"scheduler must be one of {SCHEDULERS}")
        if self.coupling not in (None, "independent", "minibatch_ot"):
            raise InvalidInputError(f"unknown coupling {self.coupling!r}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise InvalidInputError("steps_per_epoch must be at least 1")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise InvalidInputError("grad_clip must be positive")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    @property
    def coupling_mode(self) -> str:
        return self.coupling or self.bridge.coupling

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["bridge"] = self.bridge.to_dict()
        d["arch"] = self.arch.to_dict()
        return d


@dataclass
class EpochStats:
    epoch: int
    flow_loss: float
    score_loss: float
    secs: float

    def to_json(self):
        return json.dumps(asdict(self))


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)  # (total, flow, score) per step
    checkpoint: str | None = None

    @property
    def first_loss(self):
        return self.step_losses[0][0] if self.step_losses else None


def score_weight(t, spec: br.BridgeSpec, scheduler: str = "sigma2"):
    """Per-sample weight on the squared scaled-score error.

    The score loss is ``lambda(t) * |s - grad log p|^2``; writing the raw score
    as ``scaled / std`` turns it into ``lambda(t) / var * |scaled error|^2``.
    """
    t = np.asarray(t, dtype=np.float64)
    if scheduler == "sigma2":
        return np.ones_like(t)
    return 1.0 / br.bridge_var(t, spec)


def _loss_parts(drift_pred, score_pred, tg: br.BridgeTargets, t, spec, scheduler):
    with np.errstate(over="ignore", invalid="ignore"):
        de = np.asarray(drift_pred, dtype=np.float64) - tg.drift
        flow = float(np.mean(de * de))
        g_drift = 2.0 * de / de.size
        if spec.stochastic:
            se = np.asarray(score_pred, dtype=np.float64) - tg.scaled_score
            w = br._bt(score_weight(t, spec, scheduler), se)
            score = float(np.mean(w * se * se))
            g_score = 2.0 * w * se / se.size
        else:
            score, g_score = 0.0, np.zeros_like(de)
    total = flow + score
    if not (math.isfinite(total)):
        raise DivergedTrainingError("loss is not finite", tensor="loss")
    return (total, flow, score), (g_drift, g_score)


def loss(drift_pred, score_pred, targets: br.BridgeTargets, t, spec: br.BridgeSpec, scheduler: str = "sigma2"):
    """Combined flow and score regression loss as ``(total, flow_term, score_term)``.

    Both terms are means over every entry of the block, so the zero-prediction
    loss is the mean square of the targets.
    """
    if np.shape(drift_pred) != targets.drift.shape or np.shape(score_pred) != targets.drift.shape:
        raise InvalidInputError("prediction shapes do not match the targets")
    return _loss_parts(drift_pred, score_pred, targets, t, spec, scheduler)[0]


class Adam:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k in params:
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] = params[k] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_gradients(grads, max_norm):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def task_block(blocks, d):
    """Normalized ``start ++ goal`` rows taken from the first and last positions."""
    return np.concatenate([blocks[:, 0, :d], blocks[:, -1, :d]], axis=1)


def train_step_batch(X, ws_norm, config: TrainConfig, rng: Rng):
    """Draw one minibatch: expert blocks, coupled noise, times and the interpolated state."""
    spec = config.bridge
    N, L, c3 = X.shape
    d = c3 // 3
    B = config.batch_size
    idx = rng.child("index").integers(0, N, size=B)
    x1 = X[idx]
    x0 = br.sample_noise((B, L, d), ws_norm, rng.child("noise"), config.vel_noise, config.acc_noise)
    perm = br.couple(x0, x1, config.coupling_mode)
    x0 = x0[perm]
    t = spec.clamp(rng.child("time").uniform(0.0, 1.0, size=B))
    ep = br.BridgeEndpoints(x0, x1)
    xt = br.interpolate(t, ep, spec, rng=rng.child("bridge"))
    tg = br.targets(t, xt, ep, spec)
    task = task_block(x1, d)
    return t, tg, task, x1


def model_meta(config: TrainConfig, stats: NormStats, ws_norm, dt, length, extra=None):
    meta = {
        "bridge": config.bridge.to_dict(),
        "norm": stats.to_dict(),
        "bounds": [ws_norm.lo.tolist(), ws_norm.hi.tolist()],
        "dt": float(dt),
        "length": int(length),
        "noise": [config.vel_noise, config.acc_noise],
        "seed": int(config.seed),
    }
    if extra:
        meta.update(extra)
    return meta


def train(
    dataset: Dataset,
    config: TrainConfig,
    stats: NormStats | None = None,
    model: FieldModel | None = None,
    checkpoint_path=None,
    log=None,
    on_step=None,
    meta_extra=None,
):
    """Fit a :class:`FieldModel` and return it with a :class:`TrainReport`.

    ``dataset`` is in workspace units unless ``stats`` is given, in which case
    it is taken as already normalized by those stats.  ``model`` resumes from
    existing weights.  ``log`` receives one JSON line per epoch (``"-"`` means
    stdout).  ``on_step(epoch, step, losses, t, task, x1)`` is called after each update.
    """
    if len(dataset) == 0:
        raise InvalidInputError("empty training set")
    if stats is None:
        dataset, stats = normalize(dataset)
    X = dataset.blocks()
    N, L, c3 = X.shape
    d = c3 // 3
    arch = model.arch if model is not None else config.arch
    if L % arch.length_multiple:
        raise InvalidInputError(f"trajectory length {L} must be divisible by {arch.length_multiple}; resample first")
    dts = {tr.dt for tr in dataset.trajectories}
    dt = float(np.mean(list(dts)))
    rng = Rng(config.seed)
    if model is None:
        model = FieldModel(arch, d).init(rng.child("init"))
    elif model.d != d:
        raise InvalidInputError("resumed model dimension does not match the dataset")
    model.meta = model_meta(config, stats, dataset.workspace, dt, L, meta_extra)
    opt = Adam(model.params, config.lr, config.betas, config.adam_eps)
    steps = config.steps_per_epoch or math.ceil(N / config.batch_size)
    report = TrainReport()
    out = sys.stdout if log == "-" else log
    spec = config.bridge
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        sums = np.zeros(2)
        erng = rng.child("epoch").child(epoch)
        for step in range(steps):
            t, tg, task, x1 = train_step_batch(X, dataset.workspace, config, erng.child(step))
            drift, score = model.forward(t, tg.x_t, task)
            try:
                losses, (gd, gs) = _loss_parts(drift, score, tg, t, spec, config.scheduler)
                grads = model.backward(gd, gs)
            except DivergedTrainingError as exc:
                raise DivergedTrainingError(
                    f"{exc} at epoch {epoch} step {step}", tensor=exc.tensor, epoch=epoch, step=step
                ) from exc
            if config.grad_clip is not None:
                grads, _ = clip_gradients(grads, config.grad_clip)
            opt.step(model.params, grads)
            bad = [k for k, p in model.params.items() if not np.all(np.isfinite(p))]
            if bad:
                raise DivergedTrainingError(
                    f"parameter {bad[0]} became non-finite at epoch {epoch} step {step}",
                    tensor=bad[0], epoch=epoch, step=step,
                )
            report.step_losses.append(losses)
            sums += losses[1:]
            if on_step is not None:
                on_step(epoch, step, losses, t, task, x1)
        es = EpochStats(epoch, float(sums[0] / steps), float(sums[1] / steps), time.perf_counter() - t0)
        report.epochs.append(es)
        if out is not None:
            print(es.to_json(), file=out, flush=True)
    if checkpoint_path is not None:
        checkpoint.save(model, checkpoint_path)
        report.checkpoint = str(checkpoint_path)
    return model, report
