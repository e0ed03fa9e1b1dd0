"""Independent reference computations used by the tests.

Nothing here imports the package's numerical code; each oracle is derived
from first principles so it can catch errors in the implementation.
"""

import itertools
import math
from fractions import Fraction

import numpy as np


# ---- bridge ---------------------------------------------------------------

def position_mean_exact(t, order, eq, eqd, eqdd, q1):
    """Order-k position mean evaluated in exact rational arithmetic."""
    t, eq, eqd, eqdd, q1 = (Fraction(v) for v in (t, eq, eqd, eqdd, q1))
    if order == 1:
        return (1 - t) * eq + t * q1
    if order == 2:
        return (1 - t**2) * eq + (t - t**2) * eqd + t**2 * q1
    return (1 - t**3) * eq + (t - t**3) * eqd + (t**2 - t**3) / 2 * eqdd + t**3 * q1


def position_mean_rate_numeric(t, order, eq, eqd, eqdd, q1, h=1e-6):
    f = lambda s: float(position_mean_exact(Fraction(s), order, eq, eqd, eqdd, q1))  # noqa: E731
    return (f(t + h) - f(t - h)) / (2 * h)


class LinearGaussianToy:
    """Scalar source N(a, s0^2), target N(b, s1^2), independent coupling, bridge noise sigma.

    The marginal of ``(1-t) x0 + t x1 + sigma sqrt(t(1-t)) z`` is Gaussian with
    mean ``m(t)`` and variance ``v(t)``; its probability-flow velocity is
    ``m' + v' / (2 v) (x - m)`` and it transports ``x0`` to ``b + s1 (x0 - a) / s0``.
    """

    def __init__(self, a=-1.0, s0=0.5, b=2.0, s1=0.3, sigma=0.5):
        self.a, self.s0, self.b, self.s1, self.sigma = a, s0, b, s1, sigma

    def mean(self, t):
        return (1 - t) * self.a + t * self.b

    def var(self, t):
        return (1 - t) ** 2 * self.s0**2 + t**2 * self.s1**2 + self.sigma**2 * t * (1 - t)

    def dvar(self, t):
        return -2 * (1 - t) * self.s0**2 + 2 * t * self.s1**2 + self.sigma**2 * (1 - 2 * t)

    def flow(self, t, x):
        return (self.b - self.a) + self.dvar(t) / (2 * self.var(t)) * (x - self.mean(t))

    def score(self, t, x):
        return -(x - self.mean(t)) / self.var(t)

    def terminal(self, x0):
        return self.b + self.s1 * (np.asarray(x0) - self.a) / self.s0


class ToyFieldModel:
    """Duck-typed stand-in for a trained model returning the toy's exact fields.

    ``predict`` returns the drift head as ``flow + sigma^2/2 * score`` and the
    score head in the scaled convention (multiplied by the bridge std), so the
    sampler's correction recovers the flow exactly.
    """

    def __init__(self, toy, length=4, t_clamp=1e-3):
        self.toy = toy
        self.d = 1
        self.meta = {
            "bridge": {"sigma": toy.sigma, "order": 1, "t_clamp": t_clamp, "family": "sb", "sigma_min": 0.01},
            "length": length,
            "dt": 1.0,
            "bounds": [[-10.0], [10.0]],
        }

    def predict(self, t, state, task):
        t = float(np.asarray(t).reshape(-1)[0])
        sc = self.toy.score(t, state)
        drift = self.toy.flow(t, state) + 0.5 * self.toy.sigma**2 * sc
        std = self.toy.sigma * math.sqrt(t * (1 - t))
        return drift, sc * std


# ---- metrics --------------------------------------------------------------

def mmd_naive(X, Y, h):
    X = [np.ravel(x) for x in X]
    Y = [np.ravel(y) for y in Y]
    k = lambda u, v: math.exp(-float(np.sum((u - v) ** 2)) / (2 * h * h))  # noqa: E731
    sxx = sum(k(u, v) for u in X for v in X) / len(X) ** 2
    syy = sum(k(u, v) for u in Y for v in Y) / len(Y) ** 2
    sxy = sum(k(u, v) for u in X for v in Y) / (len(X) * len(Y))
    return sxx + syy - 2 * sxy


def brute_force_assignment(cost):
    n = len(cost)
    best = min(itertools.permutations(range(n)), key=lambda p: sum(cost[i][p[i]] for i in range(n)))
    return sum(cost[i][best[i]] for i in range(n))


def chord_crossing_segment(center, radius, depth_frac=0.05):
    """Endpoints of a chord that dips ``depth_frac * radius`` inside a circle.

    The endpoints themselves lie outside the circle, so only sub-sampling
    along the segment can detect the crossing.
    """
    c = np.asarray(center, dtype=float)
    y = radius * (1 - depth_frac)
    half = math.sqrt(radius**2 - y**2)
    return c + np.array([-3 * half, y]), c + np.array([3 * half, y])


# ---- gradients -------------------------------------------------------------

def central_difference(f, x, h=1e-5):
    """Gradient of scalar ``f`` at array ``x`` by central differences (``x`` is modified in place and restored)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b, floor=1e-5):
    """Max elementwise relative error with a denominator floor for exactly-zero gradients."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


class SingleExpertOracle:
    """Exact marginal fields when the data is one fixed trajectory (order-1 bridge, d=1).

    Each position entry is an independent 1-D problem: noise ``eps ~ U[-1, 1]``
    and ``x_t = (1-t) eps + t q + sigma_t z``.  The posterior over ``eps`` is
    computed by quadrature on a fine grid, which gives ``E[drift | x]`` and
    ``E[scaled score | x]`` without using any package code.
    """

    def __init__(self, q, sigma=0.5, n_grid=2001):
        self.q = np.asarray(q, dtype=float)
        self.sigma = sigma
        self.grid = np.linspace(-1.0, 1.0, n_grid)
        self.d = 1
        self.meta = {
            "bridge": {"sigma": sigma, "order": 1, "t_clamp": 1e-3, "family": "sb", "sigma_min": 0.01},
            "length": len(self.q),
            "dt": 1.0,
            "bounds": [[-1.0], [1.0]],
            "noise": [1.0, 1.0],
        }

    def predict(self, t, state, task):
        t = float(np.asarray(t).reshape(-1)[0])
        x = state[0, :, 0]
        std = self.sigma * math.sqrt(t * (1 - t))
        mu = (1 - t) * self.grid[None, :] + t * self.q[:, None]
        logw = -0.5 * ((x[:, None] - mu) / std) ** 2
        w = np.exp(logw - logw.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        e_mu = np.sum(w * mu, axis=1)
        e_eps = np.sum(w * self.grid[None, :], axis=1)
        drift = np.zeros_like(state)
        scaled = np.zeros_like(state)
        drift[0, :, 0] = (self.q - e_eps) - (x - e_mu) / (1 - t)
        scaled[0, :, 0] = (e_mu - x) / std
        return drift, scaled
