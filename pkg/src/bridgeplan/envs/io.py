"""JSON dataset files.

Document layout::

    {
      "format_version": 1,
      "workspace": {"bounds": {"min": [...], "max": [...]},
                    "obstacles": [{"center": [...], "radius": r}, ...]},
      "trajectories": [{"dt": s, "q": [[...], ...], "qd": ..., "qdd": ...}, ...]
    }

``qd``/``qdd`` are optional; when absent they are finite-differenced from
``q`` and the trajectory is flagged as derived.  Derived trajectories are
written without them so the flag survives a round trip.
"""

from __future__ import annotations

import json

import jsonschema
import numpy as np

from ..core import Dataset, Trajectory, Workspace
from ..errors import DatasetParseError, InvalidInputError

FORMAT_VERSION = 1

_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["format_version", "workspace", "trajectories"],
    "additionalProperties": False,
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "workspace": {
            "type": "object",
            "required": ["bounds"],
            "additionalProperties": False,
            "properties": {
                "bounds": {
                    "type": "object",
                    "required": ["min", "max"],
                    "additionalProperties": False,
                    "properties": {"min": _vec, "max": _vec},
                },
                "obstacles": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["center", "radius"],
                        "additionalProperties": False,
                        "properties": {"center": _vec, "radius": {"type": "number", "exclusiveMinimum": 0}},
                    },
                },
            },
        },
        "trajectories": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["dt", "q"],
                "additionalProperties": False,
                "properties": {
                    "dt": {"type": "number", "exclusiveMinimum": 0},
                    "q": _mat,
                    "qd": _mat,
                    "qdd": _mat,
                },
            },
        },
    },
}


def _pointer(path):
    return "/" + "/".join(str(p) for p in path) if path else "/"


def dataset_to_dict(ds: Dataset) -> dict:
    ws = ds.workspace
    trajs = []
    for tr in ds.trajectories:
        item = {"dt": tr.dt, "q": tr.q.tolist()}
        if not tr.derived:
            item["qd"] = tr.qd.tolist()
            item["qdd"] = tr.qdd.tolist()
        trajs.append(item)
    return {
        "format_version": FORMAT_VERSION,
        "workspace": {
            "bounds": {"min": ws.lo.tolist(), "max": ws.hi.tolist()},
            "obstacles": [{"center": c.tolist(), "radius": float(r)} for c, r in zip(ws.centers, ws.radii)],
        },
        "trajectories": trajs,
    }


def dataset_from_dict(doc) -> Dataset:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise DatasetParseError(err.message, _pointer(err.absolute_path))
    wsd = doc["workspace"]
    obs = wsd.get("obstacles", [])
    d = len(wsd["bounds"]["min"])
    try:
        ws = Workspace(
            wsd["bounds"]["min"],
            wsd["bounds"]["max"],
            np.array([o["center"] for o in obs], dtype=np.float64).reshape(-1, d),
            [o["radius"] for o in obs],
        )
    except InvalidInputError as exc:
        raise DatasetParseError(str(exc), "/workspace") from exc
    trajs = []
    for i, item in enumerate(doc["trajectories"]):
        ptr = f"/trajectories/{i}"
        try:
            if "qd" in item and "qdd" in item:
                tr = Trajectory(item["q"], item["qd"], item["qdd"], item["dt"])
            elif "qd" in item or "qdd" in item:
                raise DatasetParseError("qd and qdd must be given together", ptr)
            else:
                tr = Trajectory.from_positions(item["q"], item["dt"])
        except (InvalidInputError, ValueError) as exc:
            if isinstance(exc, DatasetParseError):
                raise
            raise DatasetParseError(str(exc), ptr) from exc
        if tr.dim != d:
            raise DatasetParseError(f"trajectory dimension {tr.dim} does not match the workspace ({d})", ptr + "/q")
        trajs.append(tr)
    try:
        return Dataset.from_trajectories(ws, trajs)
    except InvalidInputError as exc:
        raise DatasetParseError(str(exc), "/trajectories") from exc


def dumps(ds: Dataset) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(dataset_to_dict(ds), separators=(",", ":")) + "\n"


def save_dataset(ds: Dataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(ds))


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetParseError(f"invalid JSON: {exc}", "/") from exc
    return dataset_from_dict(doc)
