"""Run configuration: a JSON document whose sections mirror the library's config types.

Every field is optional.  Unknown sections or keys are rejected so typos do
not silently fall back to defaults.
"""

from __future__ import annotations

import copy
import json
from dataclasses import fields

from .bridge import BridgeSpec
from .envs.maze import MazeSpec
from .errors import InvalidInputError
from .nn.model import ArchSpec
from .sampler import SamplerConfig
from .training import TrainConfig


def _defaults_of(cls, skip=()):
    inst = cls()
    out = {}
    for f in fields(cls):
        if f.name in skip:
            continue
        v = getattr(inst, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


# The toy-maze preset: the library defaults describe a larger network, and one
# pass over ~70 demonstrations is only a couple of optimizer steps.
PIPELINE = {
    "train": {"batch_size": 32, "steps_per_epoch": 100},
    "arch": {"levels": 3, "widths": [16, 32, 64]},
    "sampler": {"score_correction": False, "pin_endpoints": True},
}


def defaults() -> dict:
    return merge(_library_defaults(), PIPELINE)


def _library_defaults() -> dict:
    return {
        "seed": 0,
        "maze": _defaults_of(MazeSpec, skip=("seed",)),
        "letters": {"shapes": ["C", "S", "L", "W"], "demos": 7, "length": 1000, "duration": 4.0},
        "split": {"held_out_fraction": 0.125, "seed": 1},
        "train": {k: v for k, v in _defaults_of(TrainConfig, skip=("bridge", "arch", "seed")).items()},
        "bridge": _defaults_of(BridgeSpec),
        "arch": _defaults_of(ArchSpec),
        "sampler": {"steps": SamplerConfig().steps, "score_correction": True, "pin_endpoints": False},
        "metrics": {"n_tasks": 10, "goal_tol_fraction": 0.02, "bandwidth": None},
    }


def merge(base: dict, override: dict, where="") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise InvalidInputError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise InvalidInputError(f"config section {where}{key!r} must be an object")
            out[key] = merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


def load(path=None, overrides=None) -> dict:
    cfg = defaults()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise InvalidInputError("config file must hold a JSON object")
        cfg = merge(cfg, doc)
    for dotted, val in (overrides or {}).items():
        if val is None:
            continue
        section, _, key = dotted.rpartition(".")
        target = cfg[section] if section else cfg
        if key not in target:
            raise InvalidInputError(f"unknown config key {dotted!r}")
        target[key] = val
    return cfg


def maze_spec(cfg: dict) -> MazeSpec:
    return MazeSpec(**cfg["maze"], seed=cfg["seed"])


def bridge_spec(cfg: dict) -> BridgeSpec:
    return BridgeSpec(**cfg["bridge"])


def arch_spec(cfg: dict) -> ArchSpec:
    return ArchSpec(**{**cfg["arch"], "widths": tuple(cfg["arch"]["widths"])})


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["train"], seed=cfg["seed"], bridge=bridge_spec(cfg), arch=arch_spec(cfg))


def sampler_config(cfg: dict, **extra) -> SamplerConfig:
    return SamplerConfig(**cfg["sampler"], **extra)
