"""Task- and time-conditioned temporal encoder-decoder with drift and score heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import Rng
from ..errors import CorruptModelError, DivergedTrainingError, InvalidInputError
from .layers import Conv1d, GroupNorm, InputGain, Linear, ResBlock, Upsample, groups_for, silu, silu_backward, sinusoidal_embedding

HEADS = ("drift", "score")


@dataclass(frozen=True)
class ArchSpec:
    levels: int = 3
    widths: tuple = (32, 64, 128)
    time_embed_dim: int = 64
    cond_dim: int = 64
    kernel: int = 5
    shared_trunk: bool = True
    task_channels: bool = True

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if self.levels < 1 or len(widths) != self.levels:
            raise InvalidInputError("need one width per level and at least one level")
        if any(b <= a for a, b in zip(widths, widths[1:])):
            raise InvalidInputError("widths must be strictly increasing")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise InvalidInputError("kernel must be a positive odd integer")
        if self.time_embed_dim < 2 or self.cond_dim < 1:
            raise InvalidInputError("embedding sizes too small")

    @property
    def length_multiple(self) -> int:
        return 2 ** (self.levels - 1)

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "widths": tuple(d["widths"])})


class _Trunk:
    """One encoder-decoder over the state block; emits the requested heads."""

    def __init__(self, prefix, arch: ArchSpec, d: int, heads):
        c3 = 3 * d
        w, k, E = arch.widths, arch.kernel, arch.cond_dim
        self.arch = arch
        self.heads = tuple(heads)
        self.t_fc1 = Linear(f"{prefix}time.fc1", arch.time_embed_dim, E)
        self.t_fc2 = Linear(f"{prefix}time.fc2", E, E)
        self.c_fc1 = Linear(f"{prefix}task.fc1", 2 * d, E)
        self.c_fc2 = Linear(f"{prefix}task.fc2", E, E)
        self.d = d
        extra = 3 * d if arch.task_channels else 0
        self.conv_in = Conv1d(f"{prefix}conv_in", c3 + extra, w[0], k)
        self.down_res, self.down = [], []
        cin = w[0]
        for i, wi in enumerate(w):
            self.down_res.append(ResBlock(f"{prefix}down{i}.res", cin, wi, E, k))
            if i < arch.levels - 1:
                self.down.append(Conv1d(f"{prefix}down{i}.pool", wi, wi, 3, stride=2))
            cin = wi
        self.mid = ResBlock(f"{prefix}mid", cin, cin, E, k)
        self.up_res, self.up = {}, {}
        for i in reversed(range(arch.levels)):
            self.up_res[i] = ResBlock(f"{prefix}up{i}.res", cin + w[i], w[i], E, k)
            cin = w[i]
            if i > 0:
                self.up[i] = Upsample(f"{prefix}up{i}.upsample", w[i], w[i - 1])
                cin = w[i - 1]
        self.out_norm = GroupNorm(f"{prefix}out.norm", groups_for(w[0]), w[0])
        self.out = {h: Conv1d(f"{prefix}head.{h}", w[0], c3, 1, zero=True) for h in self.heads}
        self.gain = {h: InputGain(f"{prefix}head.{h}.gain", E, c3) for h in self.heads}

    def layers(self):
        out = [self.t_fc1, self.t_fc2, self.c_fc1, self.c_fc2, self.conv_in]
        out += self.down_res + self.down + [self.mid]
        out += [self.up_res[i] for i in sorted(self.up_res)] + [self.up[i] for i in sorted(self.up)]
        out += [self.out_norm] + [self.out[h] for h in self.heads] + [self.gain[h] for h in self.heads]
        return out

    def init(self, P, rng: Rng):
        for layer in self.layers():
            layer.init(P, rng.gen)

    def _with_task_channels(self, x, task):
        """Append the goal-to-start straight line and the broadcast task to the state channels."""
        if not self.arch.task_channels:
            return x
        B, L, _ = x.shape
        d = self.d
        s = np.linspace(0.0, 1.0, L)[None, :, None]
        start, goal = task[:, None, :d], task[:, None, d:]
        line = start + s * (goal - start)
        return np.concatenate([x, line, np.broadcast_to(task[:, None, :], (B, L, 2 * d))], axis=2)

    def forward(self, P, t, x, task):
        arch = self.arch
        temb = sinusoidal_embedding(t, arch.time_embed_dim)
        h, kt1 = self.t_fc1.forward(P, temb)
        ha, st = silu(h)
        te, kt2 = self.t_fc2.forward(P, ha)
        g, kc1 = self.c_fc1.forward(P, task)
        ga, sc = silu(g)
        ce, kc2 = self.c_fc2.forward(P, ga)
        cond = te + ce
        c, scond = silu(cond)

        cur, kin = self.conv_in.forward(P, self._with_task_channels(x, task))
        skips, kdown, kpool = [], [], []
        for i, block in enumerate(self.down_res):
            cur, kb = block.forward(P, cur, c)
            kdown.append(kb)
            skips.append(cur)
            if i < arch.levels - 1:
                cur, kp = self.down[i].forward(P, cur)
                kpool.append(kp)
        cur, kmid = self.mid.forward(P, cur, c)
        kup_res, kup = {}, {}
        for i in reversed(range(arch.levels)):
            cur, kup_res[i] = self.up_res[i].forward(P, np.concatenate([cur, skips[i]], axis=2), c)
            if i > 0:
                cur, kup[i] = self.up[i].forward(P, cur)
        n, kn = self.out_norm.forward(P, cur)
        a, sa = silu(n)
        outs, kout, kgain = {}, {}, {}
        for hname in self.heads:
            o, kout[hname] = self.out[hname].forward(P, a)
            gx, kgain[hname] = self.gain[hname].forward(P, c, x)
            outs[hname] = o + gx
        tape = (h, st, kt1, kt2, g, sc, kc1, kc2, cond, scond, kin, kdown, kpool, kmid, kup_res, kup, n, sa, kn, kout,
                kgain, [s.shape[2] for s in skips])
        return outs, tape

    def backward(self, P, G, tape, douts):
        (h, st, kt1, kt2, g, sc, kc1, kc2, cond, scond, kin, kdown, kpool, kmid, kup_res, kup, n, sa, kn, kout,
         kgain, skip_ch) = tape
        arch = self.arch
        da = 0.0
        dc = 0.0
        for hname in self.heads:
            da = da + self.out[hname].backward(P, G, kout[hname], douts[hname])
            dc = dc + self.gain[hname].backward(P, G, kgain[hname], douts[hname])
        dcur = self.out_norm.backward(P, G, kn, silu_backward(n, sa, da))
        dskips = [None] * arch.levels
        for i in range(arch.levels):
            if i > 0:
                dcur = self.up[i].backward(P, G, kup[i], dcur)
            dcat, dci = self.up_res[i].backward(P, G, kup_res[i], dcur)
            dc = dc + dci
            split = dcat.shape[2] - skip_ch[i]
            dcur, dskips[i] = dcat[:, :, :split], dcat[:, :, split:]
        dcur, dci = self.mid.backward(P, G, kmid, dcur)
        dc = dc + dci
        for i in reversed(range(arch.levels)):
            if i < arch.levels - 1:
                dcur = self.down[i].backward(P, G, kpool[i], dcur)
            dcur = dcur + dskips[i]
            dcur, dci = self.down_res[i].backward(P, G, kdown[i], dcur)
            dc = dc + dci
        self.conv_in.backward(P, G, kin, dcur)
        dcond = silu_backward(cond, scond, dc)
        dha = self.t_fc2.backward(P, G, kt2, dcond)
        self.t_fc1.backward(P, G, kt1, silu_backward(h, st, dha))
        dga = self.c_fc2.backward(P, G, kc2, dcond)
        self.c_fc1.backward(P, G, kc1, silu_backward(g, sc, dga))


@dataclass
class FieldModel:
    """Joint drift / scaled-score approximator.

    Input contract: ``t`` of shape ``(B,)`` (or scalar), state block
    ``(B, L, 3d)``, task ``(B, 2d)`` as normalized ``start ++ goal``.
    Returns two blocks shaped like the state.
    """

    arch: ArchSpec
    d: int
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arch.shared_trunk:
            self._trunks = [(_Trunk("", self.arch, self.d, HEADS), HEADS)]
        else:
            self._trunks = [(_Trunk(f"{h}_net.", self.arch, self.d, (h,)), (h,)) for h in HEADS]
        self._tape = None

    def init(self, rng: Rng):
        P = {}
        for i, (trunk, _) in enumerate(self._trunks):
            trunk.init(P, rng.child(f"trunk{i}"))
        self.params = {k: P[k] for k in sorted(P)}
        return self

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def _validate(self, t, state, task):
        state = np.asarray(state, dtype=np.float64)
        task = np.asarray(task, dtype=np.float64)
        if state.ndim != 3 or state.shape[2] != 3 * self.d:
            raise InvalidInputError(f"state block must be (B, L, {3 * self.d}), got {state.shape}")
        B, L, _ = state.shape
        if L % self.arch.length_multiple:
            raise InvalidInputError(f"length {L} not divisible by {self.arch.length_multiple}")
        if task.ndim == 1:
            task = np.broadcast_to(task, (B, task.size))
        if task.shape != (B, 2 * self.d):
            raise InvalidInputError(f"task must be (B, {2 * self.d}), got {task.shape}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (B,)) if np.size(t) in (1, B) else None
        if t is None:
            raise InvalidInputError("flow time must be a scalar or one value per batch element")
        if np.any(t < 0) or np.any(t > 1):
            raise InvalidInputError("flow time must lie in [0, 1]")
        for name, p in self.params.items():
            if not np.all(np.isfinite(p)):
                raise CorruptModelError(f"parameter {name} holds non-finite values")
        return t, state, task

    def _run(self, t, state, task):
        t, state, task = self._validate(t, state, task)
        outs, tapes = {}, []
        for trunk, _ in self._trunks:
            o, tape = trunk.forward(self.params, t, state, task)
            outs.update(o)
            tapes.append(tape)
        return outs["drift"], outs["score"], tapes

    def forward(self, t, state, task):
        """Evaluate both heads and keep the tape for :meth:`backward`."""
        drift, score, self._tape = self._run(t, state, task)
        return drift, score

    def predict(self, t, state, task):
        drift, score, _ = self._run(t, state, task)
        return drift, score

    def backward(self, d_drift, d_score):
        """Parameter gradients of a scalar loss given its gradient w.r.t. both outputs."""
        if self._tape is None:
            raise InvalidInputError("backward called before forward")
        G = {}
        douts = {"drift": np.asarray(d_drift, dtype=np.float64), "score": np.asarray(d_score, dtype=np.float64)}
        for (trunk, heads), tape in zip(self._trunks, self._tape):
            trunk.backward(self.params, G, tape, {h: douts[h] for h in heads})
        grads = {}
        for name in self.params:
            g = G.get(name)
            g = np.zeros_like(self.params[name]) if g is None else g
            if not np.all(np.isfinite(g)):
                raise DivergedTrainingError(f"non-finite gradient in {name}", tensor=name)
            grads[name] = g
        return grads


def init(arch: ArchSpec, d: int, rng: Rng) -> FieldModel:
    return FieldModel(arch, d).init(rng)


def forward(model: FieldModel, t, state, task):
    return model.forward(t, state, task)


def backward(model: FieldModel, d_drift, d_score):
    return model.backward(d_drift, d_score)
