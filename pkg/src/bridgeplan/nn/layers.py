"""Layers with explicit forward/backward passes over named parameter dicts.

Every ``forward(P, x)`` returns ``(y, cache)`` and leaves the layer untouched,
so one layer object can be evaluated any number of times.  ``backward(P, G,
cache, dy)`` accumulates parameter gradients into ``G`` and returns ``dx``.
Activations are channel-last: ``(B, L, C)``.
"""

import math

import numpy as np


def silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s, s


def silu_backward(x, s, dy):
    return dy * (s + x * s * (1.0 - s))


def _accumulate(G, name, value):
    if name in G:
        G[name] += value
    else:
        G[name] = value.copy() if isinstance(value, np.ndarray) else value


def _uniform_fan_in(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, name, din, dout, zero=False):
        self.name, self.din, self.dout, self.zero = name, din, dout, zero
        self.w, self.b = f"{name}.weight", f"{name}.bias"

    def init(self, P, rng):
        shape = (self.dout, self.din)
        P[self.w] = np.zeros(shape) if self.zero else _uniform_fan_in(rng, shape, self.din)
        P[self.b] = np.zeros(self.dout)

    def forward(self, P, x):
        return x @ P[self.w].T + P[self.b], x

    def backward(self, P, G, x, dy):
        _accumulate(G, self.w, dy.T @ x)
        _accumulate(G, self.b, dy.sum(axis=0))
        return dy @ P[self.w]


class Conv1d:
    """1-D convolution along axis 1, zero padding ``k // 2``, optional stride.

    Columns are built from ``k`` shifted slices so both im2col and its adjoint
    are contiguous copies.
    """

    def __init__(self, name, cin, cout, k, stride=1, zero=False):
        self.name, self.cin, self.cout, self.k, self.stride, self.zero = name, cin, cout, k, stride, zero
        self.pad = k // 2
        self.w, self.b = f"{name}.weight", f"{name}.bias"

    def init(self, P, rng):
        shape = (self.cout, self.cin, self.k)
        P[self.w] = np.zeros(shape) if self.zero else _uniform_fan_in(rng, shape, self.cin * self.k)
        P[self.b] = np.zeros(self.cout)

    def out_len(self, L):
        return (L + 2 * self.pad - self.k) // self.stride + 1

    def _wmat(self, P):
        # (cout, cin, k) -> (k * cin, cout) matching the column layout
        return P[self.w].transpose(2, 1, 0).reshape(self.k * self.cin, self.cout)

    def forward(self, P, x):
        B, L, C = x.shape
        Lo = self.out_len(L)
        if self.k == 1 and self.stride == 1:
            cols = x.reshape(B * L, C)
        else:
            xp = np.zeros((B, L + 2 * self.pad, C))
            xp[:, self.pad : self.pad + L] = x
            span = (Lo - 1) * self.stride + 1
            cols = np.concatenate([xp[:, j : j + span : self.stride] for j in range(self.k)], axis=2)
            cols = cols.reshape(B * Lo, self.k * C)
        y = cols @ self._wmat(P) + P[self.b]
        return y.reshape(B, Lo, self.cout), (cols, x.shape)

    def backward(self, P, G, cache, dy):
        cols, (B, L, C) = cache
        Lo = dy.shape[1]
        dy2 = dy.reshape(B * Lo, self.cout)
        dW = (cols.T @ dy2).reshape(self.k, self.cin, self.cout).transpose(2, 1, 0)
        _accumulate(G, self.w, dW)
        _accumulate(G, self.b, dy2.sum(axis=0))
        dcols = dy2 @ self._wmat(P).T
        if self.k == 1 and self.stride == 1:
            return dcols.reshape(B, L, C)
        dcols = dcols.reshape(B, Lo, self.k * C)
        dxp = np.zeros((B, L + 2 * self.pad, C))
        span = (Lo - 1) * self.stride + 1
        for j in range(self.k):
            dxp[:, j : j + span : self.stride] += dcols[:, :, j * C : (j + 1) * C]
        return dxp[:, self.pad : self.pad + L]


class GroupNorm:
    def __init__(self, name, groups, channels, eps=1e-5):
        if channels % groups:
            raise ValueError(f"{channels} channels do not split into {groups} groups")
        self.name, self.groups, self.channels, self.eps = name, groups, channels, eps
        self.g, self.b = f"{name}.weight", f"{name}.bias"

    def init(self, P, rng):
        P[self.g] = np.ones(self.channels)
        P[self.b] = np.zeros(self.channels)

    def forward(self, P, x):
        B, L, C = x.shape
        xg = x.reshape(B, L, self.groups, -1)
        mu = xg.mean(axis=(1, 3), keepdims=True)
        xc = xg - mu
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=(1, 3), keepdims=True) + self.eps)
        xhat = (xc * inv).reshape(B, L, C)
        return xhat * P[self.g] + P[self.b], (xhat, inv)

    def backward(self, P, G, cache, dy):
        xhat, inv = cache
        B, L, C = dy.shape
        _accumulate(G, self.g, np.sum(dy * xhat, axis=(0, 1)))
        _accumulate(G, self.b, np.sum(dy, axis=(0, 1)))
        dxhat = (dy * P[self.g]).reshape(B, L, self.groups, -1)
        xh = xhat.reshape(B, L, self.groups, -1)
        n = L * xh.shape[3]
        dx = dxhat - dxhat.mean(axis=(1, 3), keepdims=True)
        dx -= xh * ((dxhat * xh).sum(axis=(1, 3), keepdims=True) / n)
        return (dx * inv).reshape(B, L, C)


def groups_for(channels):
    return math.gcd(8, channels)


class ResBlock:
    """conv-norm-SiLU, add projected conditioning, conv-norm-SiLU, residual."""

    def __init__(self, name, cin, cout, cond_dim, k):
        self.conv1 = Conv1d(f"{name}.conv1", cin, cout, k)
        self.norm1 = GroupNorm(f"{name}.norm1", groups_for(cout), cout)
        self.cond = Linear(f"{name}.cond", cond_dim, cout)
        self.conv2 = Conv1d(f"{name}.conv2", cout, cout, k)
        self.norm2 = GroupNorm(f"{name}.norm2", groups_for(cout), cout)
        self.skip = Conv1d(f"{name}.skip", cin, cout, 1) if cin != cout else None

    def layers(self):
        out = [self.conv1, self.norm1, self.cond, self.conv2, self.norm2]
        return out + ([self.skip] if self.skip else [])

    def init(self, P, rng):
        for layer in self.layers():
            layer.init(P, rng)

    def forward(self, P, x, c):
        h1, k1 = self.conv1.forward(P, x)
        n1, kn1 = self.norm1.forward(P, h1)
        a1, s1 = silu(n1)
        e, ke = self.cond.forward(P, c)
        h2, k2 = self.conv2.forward(P, a1 + e[:, None, :])
        n2, kn2 = self.norm2.forward(P, h2)
        a2, s2 = silu(n2)
        if self.skip:
            r, kr = self.skip.forward(P, x)
        else:
            r, kr = x, None
        return a2 + r, (k1, kn1, n1, s1, ke, k2, kn2, n2, s2, kr)

    def backward(self, P, G, cache, dy):
        k1, kn1, n1, s1, ke, k2, kn2, n2, s2, kr = cache
        dx = self.skip.backward(P, G, kr, dy) if self.skip else dy
        dh2 = self.norm2.backward(P, G, kn2, silu_backward(n2, s2, dy))
        dz = self.conv2.backward(P, G, k2, dh2)
        dc = self.cond.backward(P, G, ke, dz.sum(axis=1))
        dh1 = self.norm1.backward(P, G, kn1, silu_backward(n1, s1, dz))
        dx = dx + self.conv1.backward(P, G, k1, dh1)
        return dx, dc


class Upsample:
    """Nearest-neighbour x2 followed by a width-3 convolution."""

    def __init__(self, name, cin, cout):
        self.conv = Conv1d(f"{name}.conv", cin, cout, 3)

    def init(self, P, rng):
        self.conv.init(P, rng)

    def forward(self, P, x):
        return self.conv.forward(P, np.repeat(x, 2, axis=1))

    def backward(self, P, G, cache, dy):
        d = self.conv.backward(P, G, cache, dy)
        return d[:, 0::2] + d[:, 1::2]


class InputGain:
    """Conditioning-dependent per-channel gain applied to the raw input: ``g(c) * x``.

    Zero-initialized, so it contributes nothing until trained.
    """

    def __init__(self, name, cond_dim, channels):
        self.lin = Linear(f"{name}", cond_dim, channels, zero=True)

    def init(self, P, rng):
        self.lin.init(P, rng)

    def forward(self, P, c, x):
        g, kg = self.lin.forward(P, c)
        return g[:, None, :] * x, (kg, x)

    def backward(self, P, G, cache, dy):
        kg, x = cache
        return self.lin.backward(P, G, kg, np.sum(dy * x, axis=1))


def sinusoidal_embedding(t, dim):
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = 1000.0 * t[:, None] * freqs[None]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)
