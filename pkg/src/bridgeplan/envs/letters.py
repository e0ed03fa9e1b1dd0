"""Synthetic handwriting-like demonstrations: noisy splines through letter strokes.

A stand-in for converted handwriting data: each shape is a handful of
control points, and each demonstration perturbs them, fits a spline and
retimes it to a fixed length.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from ..core import Dataset, Rng, Trajectory, Workspace

SHAPES = {
    "C": [(8, 8), (3, 9), (0.5, 5), (3, 1), (8, 2)],
    "S": [(8, 8.5), (3, 8.5), (2.5, 6), (7.5, 4), (7, 1.5), (1.5, 1.5)],
    "L": [(2, 9), (2.2, 5), (2.5, 1.5), (5, 1.2), (8.5, 1)],
    "W": [(1, 9), (2.5, 1), (5, 6), (7.5, 1), (9, 9)],
    "G": [(8.5, 8), (3, 9), (1, 5), (3, 1), (8, 2), (8, 5), (5.5, 5)],
}


def letter_trajectory(points, length, duration, rng: Rng, jitter=0.25):
    pts = np.asarray(points, dtype=np.float64)
    pts = pts + jitter * rng.normal(pts.shape)
    u = np.linspace(0.0, 1.0, len(pts))
    curve = CubicSpline(u, pts, bc_type="natural")(np.linspace(0.0, 1.0, length))
    return Trajectory.from_positions(curve, duration / (length - 1))


def generate_letters_dataset(shapes=("C", "S", "L", "W"), demos=7, length=1000, duration=4.0, seed=0) -> Dataset:
    """``demos`` demonstrations per shape on a ``[-1, 11]^2`` canvas with no obstacles."""
    rng = Rng(seed)
    trajs = []
    for name in shapes:
        srng = rng.child(name)
        for k in range(demos):
            trajs.append(letter_trajectory(SHAPES[name], length, duration, srng.child(k)))
    ws = Workspace(np.array([-1.0, -1.0]), np.array([11.0, 11.0]))
    return Dataset.from_trajectories(ws, trajs)
