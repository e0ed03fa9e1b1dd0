"""Time the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
Prints one line per kernel with the best-of-N time per backend and the speedup.
"""

import argparse
import timeit

import numpy as np

from bridgeplan import _kernels


def cases():
    rng = np.random.default_rng(0)
    free = rng.random((256, 256)) > 0.2
    free[0, 0] = True
    cost = rng.random((64, 64))
    path = np.cumsum(rng.normal(scale=0.05, size=(1000, 2)), axis=0) + 5.0
    centers = rng.uniform(0, 10, (8, 2))
    radii = rng.uniform(0.3, 0.8, 8)
    lo, hi = np.zeros(2), np.full(2, 10.0)
    return {
        "grid_dijkstra 256x256": lambda m: _kernels.grid_dijkstra(free, (0, 0), impl=m),
        "linear_assignment 64x64": lambda m: _kernels.linear_assignment(cost, impl=m),
        "first_collision L=1000": lambda m: _kernels.first_collision(path, centers, radii, lo, hi, 0.05, impl=m),
        "segment_free 256": lambda m: _kernels.segment_free(free, (0, 0), (255, 200), impl=m),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    impls = _kernels.implementations()
    print(f"active backend: {_kernels.BACKEND}")
    for name, fn in cases().items():
        times = {}
        for label, mod in impls.items():
            times[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = "  ".join(f"{k}={v * 1e3:9.3f} ms" for k, v in times.items())
        speed = f"  speedup={times['python'] / times['compiled']:.1f}x" if "compiled" in times else ""
        print(f"{name:<26} {row}{speed}")


if __name__ == "__main__":
    main()
