"""Hot loops with a compiled implementation and a pure-Python fallback.

The compiled module is used when it was built and ``BRIDGEPLAN_PURE`` is not
set to a truthy value. ``BACKEND`` names the active implementation.
"""

import os

import numpy as np

from . import fallback

try:
    from . import _ckernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_force_pure = os.environ.get("BRIDGEPLAN_PURE", "").strip().lower() in ("1", "true", "yes")
_impl = fallback if (_compiled is None or _force_pure) else _compiled
BACKEND = "python" if _impl is fallback else "compiled"
HAVE_COMPILED = _compiled is not None


def implementations():
    """Available backends keyed by name (for benchmarks and equivalence tests)."""
    out = {"python": fallback}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def grid_dijkstra(free, start, impl=None):
    """Shortest 8-connected path distances (diagonal cost sqrt 2, no corner cutting).

    Returns ``(dist, parent)``; ``parent`` holds flat indices, -1 at the source
    and at unreachable cells.
    """
    mod = impl or _impl
    free = np.ascontiguousarray(free, dtype=np.uint8)
    return mod.grid_dijkstra(free, int(start[0]), int(start[1]))


def linear_assignment(cost, impl=None):
    mod = impl or _impl
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"square cost matrix required, got {cost.shape}")
    if cost.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return mod.linear_assignment(cost)


def first_collision(points, centers, radii, lo, hi, spacing, impl=None):
    mod = impl or _impl
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.shape[0] == 1:
        pts = np.concatenate([pts, pts])
    d = pts.shape[1]
    return int(
        mod.first_collision(
            pts,
            np.ascontiguousarray(np.reshape(centers, (-1, d)), dtype=np.float64),
            np.ascontiguousarray(radii, dtype=np.float64).reshape(-1),
            np.ascontiguousarray(lo, dtype=np.float64),
            np.ascontiguousarray(hi, dtype=np.float64),
            float(spacing),
        )
    )


def segment_free(free, a, b, impl=None):
    mod = impl or _impl
    free = np.ascontiguousarray(free, dtype=np.uint8)
    return bool(mod.segment_free(free, int(a[0]), int(a[1]), int(b[0]), int(b[1])))
