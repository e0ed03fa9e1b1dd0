"""Command line: ``bridgeplan {gen-data,train,sample,eval}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every command prints its effective configuration as one JSON line first.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import config as cfgmod
from .core import Dataset, NormStats, Rng, Task, Workspace, resample
from .envs.io import dumps as dataset_dumps
from .envs.io import load_dataset
from .envs.letters import generate_letters_dataset
from .envs.maze import generate_maze_dataset, split_tasks
from .errors import (
    BridgePlanError,
    CheckpointFormatError,
    DatasetParseError,
    DivergedTrainingError,
    InvalidInputError,
    SamplingDivergedError,
)
from .metrics import KernelSpec, evaluate, feasibility, mmd, noise_trajectories, summarize
from .nn import checkpoint
from .sampler import SamplerConfig, batch_generate, generate
from .svg import render
from .training import train


class UsageError(Exception):
    pass


def _echo(command, cfg, **extra):
    print(json.dumps({"command": command, "config": cfg, **extra}, sort_keys=True), flush=True)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _json(obj):
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _fit_length(ds: Dataset, multiple: int, length=None) -> Dataset:
    """Resample every trajectory to ``length`` (default: the common length rounded up to ``multiple``)."""
    if length is None:
        L = max(tr.length for tr in ds.trajectories)
        length = -(-L // multiple) * multiple
    if all(tr.length == length for tr in ds.trajectories):
        return ds
    return Dataset.from_trajectories(ds.workspace, [resample(tr, length) for tr in ds.trajectories])


def _held_out(ds: Dataset, meta: dict):
    split = meta.get("split")
    if not split:
        return ds, ds
    return split_tasks(ds, split["held_out_fraction"], Rng(split["seed"]))


def _load_model(path):
    try:
        return checkpoint.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint {path}: {exc}") from exc


def _load_data(path):
    try:
        return load_dataset(path)
    except OSError as exc:
        raise UsageError(f"cannot read dataset {path}: {exc}") from exc


# gen-data ----------------------------------------------------------------


def cmd_gen_data(args):
    cfg = cfgmod.load(
        args.config,
        {
            "seed": args.seed,
            "maze.n_obstacles": args.n_obstacles,
            "maze.n_tasks": args.n_tasks,
            "maze.experts_per_task": args.experts_per_task,
            "maze.length": args.length if args.preset == "maze" else None,
            "letters.length": args.length if args.preset == "letters" else None,
        },
    )
    _echo("gen-data", cfg, preset=args.preset)
    if args.preset == "maze":
        ds = generate_maze_dataset(cfgmod.maze_spec(cfg))
    else:
        lc = cfg["letters"]
        ds = generate_letters_dataset(tuple(lc["shapes"]), lc["demos"], lc["length"], lc["duration"], cfg["seed"])
    _write_text(args.out, dataset_dumps(ds))
    tr = ds.trajectories[0]
    print(f"wrote {args.out}: N={len(ds)} L={tr.length} d={tr.dim} obstacles={ds.workspace.n_obstacles}")
    return 0


# train -------------------------------------------------------------------


def cmd_train(args):
    cfg = cfgmod.load(
        args.config,
        {
            "seed": args.seed,
            "train.epochs": args.epochs,
            "train.batch_size": args.batch_size,
            "train.steps_per_epoch": args.steps_per_epoch,
            "train.lr": args.lr,
            "bridge.family": args.family,
            "bridge.order": args.order,
            "bridge.sigma": args.sigma,
        },
    )
    if args.no_split:
        cfg["split"] = None
    _echo("train", cfg)
    tcfg = cfgmod.train_config(cfg)
    resumed = _load_model(args.resume) if args.resume else None
    arch = resumed.arch if resumed is not None else tcfg.arch
    ds = _fit_length(_load_data(args.data), arch.length_multiple)
    meta_extra = {}
    if cfg["split"]:
        ds, _ = split_tasks(ds, cfg["split"]["held_out_fraction"], Rng(cfg["split"]["seed"]))
        meta_extra["split"] = cfg["split"]
    log = open(args.log, "w", encoding="utf-8") if args.log else "-"
    try:
        model, report = train(ds, tcfg, model=resumed, checkpoint_path=args.out, log=log, meta_extra=meta_extra)
    except DivergedTrainingError as exc:
        print(json.dumps({"error": str(exc), "epoch": exc.epoch, "step": exc.step, "tensor": exc.tensor}))
        return 1
    finally:
        if log != "-":
            log.close()
    print(f"wrote {args.out}: params={model.n_params} final flow_loss={report.epochs[-1].flow_loss:.6g} "
          f"score_loss={report.epochs[-1].score_loss:.6g}")
    return 0


# sample ------------------------------------------------------------------


def _traj_dict(tr):
    return {"dt": tr.dt, "q": tr.q.tolist(), "qd": tr.qd.tolist(), "qdd": tr.qdd.tolist()}


def cmd_sample(args):
    cfg = cfgmod.load(args.config, {"seed": args.seed, **_sampler_overrides(args)})
    _echo("sample", cfg)
    model = _load_model(args.checkpoint)
    ds = _load_data(args.data) if args.data else None
    if args.task_index is not None:
        if ds is None:
            raise UsageError("--task-index needs --data")
        if not 0 <= args.task_index < len(ds):
            raise UsageError(f"--task-index must lie in [0, {len(ds)})")
        task = ds.tasks[args.task_index]
    elif args.start is not None and args.goal is not None:
        task = Task(args.start, args.goal)
    else:
        raise UsageError("give --start and --goal, or --task-index with --data")
    snaps = (0.0, 0.25, 0.5, 0.75, 1.0) if args.snapshots else ()
    scfg = cfgmod.sampler_config(cfg, snapshots=snaps)
    try:
        res = generate(model, task, scfg, Rng(cfg["seed"]))
    except SamplingDivergedError as exc:
        print(json.dumps({"error": str(exc), "step": exc.step}))
        return 1
    doc = {"task": {"start": task.start.tolist(), "goal": task.goal.tolist()}, "trajectory": _traj_dict(res.trajectory)}
    if snaps:
        doc["snapshots"] = [{"t": t, "q": q.tolist()} for t, q in res.flow_snapshots]
    if ds is not None:
        doc["verdict"] = feasibility(res.trajectory, task, ds.workspace).to_dict()
    _write_text(args.out, _json(doc))
    print(f"wrote {args.out}: planning time {res.wall_secs:.4f} s")
    if args.svg:
        if ds is not None:
            ws = ds.workspace
            near = [tr.q for tr, tk in zip(ds.trajectories, ds.tasks) if _near(tk, task, ws)]
        else:
            stats = NormStats.from_dict(model.meta["norm"])
            lo, hi = model.meta["bounds"]
            ws = Workspace(stats.inv_positions(lo), stats.inv_positions(hi))
            near = []
        _write_text(args.svg, render(ws, near, [res.trajectory.q], res.flow_snapshots, [task]))
    return 0


def _near(a: Task, b: Task, ws, frac=0.05):
    tol = frac * ws.diagonal
    return np.linalg.norm(a.start - b.start) <= tol and np.linalg.norm(a.goal - b.goal) <= tol


# eval --------------------------------------------------------------------

COLUMNS = ("mmd", "tj_mean", "tj_std", "ec_mean", "ec_std", "feasibility")


def table(rows):
    """Aligned text table: one row per (name, report dict)."""
    head = ["name", *COLUMNS, "plan_time"]
    lines = []
    for name, r in rows:
        vals = [name] + [r[c] if isinstance(r[c], str) else f"{r[c]:.4g}" for c in COLUMNS]
        pt = r.get("plan_time_mean")
        vals.append("-" if pt is None else f"{pt:.4g}±{r['plan_time_std']:.2g}")
        lines.append(vals)
    widths = [max(len(str(x)) for x in col) for col in zip(head, *lines)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return "\n".join(fmt.format(*row) for row in [head, *lines])


def _timing(model, tasks, cfg, lengths, rng):
    out = {}
    for L in lengths:
        if L % model.arch.length_multiple:
            raise UsageError(f"timing length {L} is not a multiple of {model.arch.length_multiple}")
        scfg = cfgmod.sampler_config(cfg, length=L)
        res = batch_generate(model, tasks, scfg, rng.child(L))
        secs = np.array([r.wall_secs for r in res if r.ok])
        out[str(L)] = {"mean": float(secs.mean()), "std": float(secs.std()), "n": int(secs.size)}
    return out


def cmd_eval(args):
    cfg = cfgmod.load(args.config, {"seed": args.seed, "metrics.n_tasks": args.n_tasks, **_sampler_overrides(args)})
    _echo("eval", cfg)
    mc = cfg["metrics"]
    kernel = KernelSpec(bandwidth=mc["bandwidth"])
    data = _load_data(args.data)
    tol = mc["goal_tol_fraction"] * data.workspace.diagonal
    rng = Rng(cfg["seed"])
    rows, timing = [], {}
    if args.experts:
        n = min(mc["n_tasks"], len(data))
        rep = summarize(list(data.trajectories[:n]), list(data.tasks[:n]), list(data.trajectories[:n]),
                        data.workspace, kernel, tol)
        rows.append(("experts", rep))
    else:
        if not args.checkpoint:
            raise UsageError("eval needs --checkpoint (or --experts)")
        for path in args.checkpoint:
            model = _load_model(path)
            ds = _fit_length(data, model.arch.length_multiple, model.meta.get("length"))
            _, held = _held_out(ds, model.meta)
            n = min(mc["n_tasks"], len(held))
            scfg = cfgmod.sampler_config(cfg)
            rep, _ = evaluate(model, held, n, scfg, rng, kernel, tol)
            rows.append((path, rep))
            if args.timing_lengths:
                tasks = list(held.tasks[: min(args.timing_n, n)])
                timing[path] = _timing(model, tasks, cfg, args.timing_lengths, rng.child("timing"))
    ref = data if args.experts else held
    noise = noise_trajectories(data.workspace, len(ref.trajectories[:n]), ref.trajectories[0].length, rng.child("noise"))
    noise_mmd = mmd(noise, list(ref.trajectories[:n]), kernel)
    if len(rows) == 1:
        doc = {**rows[0][1].to_dict(), "noise_mmd": noise_mmd}
    else:
        doc = {"rows": [{"checkpoint": name, **r.to_dict()} for name, r in rows], "noise_mmd": noise_mmd}
    if args.out:
        _write_text(args.out, _json(doc))
    print(table([(name, r.to_dict(timing=True)) for name, r in rows]))
    if timing:
        for path, t in timing.items():
            for L, s in t.items():
                print(f"planning time {path} L={L}: {s['mean']:.4f} ± {s['std']:.4f} s (n={s['n']})")
        if args.timing_out:
            _write_text(args.timing_out, _json(timing))
    if not all(r.finite() for _, r in rows):
        print("non-finite metric in report", file=sys.stderr)
        return 1
    return 0


# entry -------------------------------------------------------------------


def _sampler_overrides(args):
    return {
        "sampler.steps": args.steps,
        "sampler.score_correction": args.score_correction,
        "sampler.pin_endpoints": args.pin_endpoints,
    }


def _sampler_flags(parser):
    parser.add_argument("--steps", type=int)
    parser.add_argument("--score-correction", action=argparse.BooleanOptionalAction, default=None,
                        help="subtract half sigma^2 times the learned score from the drift")
    parser.add_argument("--pin-endpoints", action=argparse.BooleanOptionalAction, default=None,
                        help="hold the first and last positions on their bridge towards start and goal")


def _floats(n=None):
    return {"type": float, "nargs": n or "+"}


def build_parser():
    p = argparse.ArgumentParser(prog="bridgeplan", description="Task-conditioned bridge-flow motion planning.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a dataset file")
    g.add_argument("--preset", choices=("maze", "letters"), default="maze")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--n-obstacles", type=int)
    g.add_argument("--n-tasks", type=int)
    g.add_argument("--experts-per-task", type=int)
    g.add_argument("--length", type=int)
    g.add_argument("--config")
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a field model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--family", choices=("sb", "cfm", "trig", "otcfm"))
    t.add_argument("--order", type=int, choices=(1, 2, 3))
    t.add_argument("--sigma", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--steps-per-epoch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--log", help="epoch log file (default: stdout)")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--no-split", action="store_true", help="train on every task (no held-out split)")
    t.add_argument("--config")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sample", help="generate one trajectory")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--start", **_floats())
    s.add_argument("--goal", **_floats())
    s.add_argument("--task-index", type=int)
    s.add_argument("--data")
    s.add_argument("--seed", type=int)
    _sampler_flags(s)
    s.add_argument("--svg")
    s.add_argument("--snapshots", action="store_true")
    s.add_argument("--config")
    s.set_defaults(fn=cmd_sample)

    e = sub.add_parser("eval", help="evaluate checkpoints on held-out tasks")
    e.add_argument("--checkpoint", nargs="+")
    e.add_argument("--data", required=True)
    e.add_argument("--out")
    e.add_argument("--n-tasks", type=int)
    e.add_argument("--seed", type=int)
    _sampler_flags(e)
    e.add_argument("--experts", action="store_true", help="score the dataset's own trajectories")
    e.add_argument("--timing-lengths", type=int, nargs="*", default=[256, 1000])
    e.add_argument("--timing-n", type=int, default=10)
    e.add_argument("--timing-out")
    e.add_argument("--config")
    e.set_defaults(fn=cmd_eval)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, InvalidInputError, DatasetParseError, CheckpointFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BridgePlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
