"""Command line front end: train, eval, sweep, compare, optimize-jammer-location."""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .harness import Scenario, run_experiment, compare_table
from .jammer import optimize_location
from .traffic import ConstraintViolation


def _apply_set(sc: Scenario, override: str) -> None:
    """dotted.path=value override; values parsed as JSON, else kept as string."""
    path, _, raw = override.partition("=")
    if not _:
        raise SystemExit(f"--set needs key=value, got {override!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    obj = sc
    parts = path.split(".")
    for p in parts[:-1]:
        obj = getattr(obj, p)
    if not hasattr(obj, parts[-1]):
        raise SystemExit(f"unknown scenario field {path!r}")
    setattr(obj, parts[-1], value)


def _load_scenario(args) -> Scenario:
    if args.config:
        with open(args.config) as f:
            sc = Scenario.from_dict(json.load(f))
    elif getattr(args, "preset", "desk") == "paper":
        sc = Scenario.paper()
    else:
        sc = Scenario.desk()
    for ov in args.set or []:
        _apply_set(sc, ov)
    return sc


def _out_dir(args, default: str) -> str:
    if args.out:
        return args.out
    return os.path.join(os.environ.get("SLICESIM_OUTDIR", "."), default)


def _common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="scenario JSON file")
    sub.add_argument("--preset", choices=("desk", "paper"), default="desk")
    sub.add_argument("--set", action="append", metavar="KEY=VAL",
                     help="dotted scenario override, repeatable")
    sub.add_argument("--out", help="output directory (SLICESIM_OUTDIR otherwise)")
    sub.add_argument("--seed", type=int, help="override scenario seed")


def _finish(sc: Scenario, args, default_dir: str) -> int:
    if args.seed is not None:
        sc.seed = args.seed
    out = _out_dir(args, default_dir)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "scenario.json"), "w") as f:
        json.dump(sc.to_dict(), f, indent=2)
    summary = run_experiment(sc, out_dir=out)
    summary.pop("_recorder", None)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_train(args) -> int:
    sc = _load_scenario(args)
    sc.jammer = None
    sc.victim_checkpoint = None
    return _finish(sc, args, f"train_{sc.victim}_s{args.seed or sc.seed}")


def cmd_eval(args) -> int:
    sc = _load_scenario(args)
    if args.checkpoint:
        sc.victim_checkpoint = args.checkpoint
    if args.jammer:
        sc.jammer = None if args.jammer == "none" else args.jammer
    tag = sc.jammer or "none"
    return _finish(sc, args, f"eval_{sc.victim}_vs_{tag}_s{args.seed or sc.seed}")


def _sweep_one(payload: tuple) -> dict:
    data, seed, out = payload
    sc = Scenario.from_dict(data)
    sc.seed = seed
    summary = run_experiment(sc, out_dir=out)
    summary.pop("_recorder", None)
    return summary


def cmd_sweep(args) -> int:
    sc = _load_scenario(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    base = _out_dir(args, f"sweep_{sc.victim}_vs_{sc.jammer or 'none'}")
    jobs = [(sc.to_dict(), s, os.path.join(base, f"seed{s}")) for s in seeds]
    workers = min(args.workers, len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    merged = {
        "seeds": seeds,
        "avg_reward": float(np.mean([r["avg_reward"] for r in results])),
        "completion_ratio": float(np.mean([r["completion_ratio"] for r in results])),
        "runs": results,
    }
    os.makedirs(base, exist_ok=True)
    with open(os.path.join(base, "scenario.json"), "w") as f:
        json.dump(sc.to_dict(), f, indent=2)
    with open(os.path.join(base, "sweep.json"), "w") as f:
        json.dump(merged, f, indent=2)
    print(json.dumps(merged, indent=2))
    return 0


def cmd_compare(args) -> int:
    summaries = []
    for path in args.summaries:
        with open(path) as f:
            data = json.load(f)
        summaries.extend(data.get("runs", [data]) if args.merge_sweeps else [data])
    print(compare_table(summaries, table=args.table))
    return 0


def cmd_optimize(args) -> int:
    sc = _load_scenario(args)
    from .harness import ring_layout
    bs_xy = ring_layout(sc.radio.num_base_stations, sc.bs_spacing_km)
    rng = np.random.default_rng(args.seed if args.seed is not None else sc.seed)
    best, gx, gy, obj = optimize_location(
        sc.radio, bs_xy, sc.radio.cell_radius_km, pitch_km=args.pitch,
        mc_samples=args.samples, rng=rng)
    result = {
        "best_xy_km": [float(best[0]), float(best[1])],
        "pitch_km": args.pitch,
        "mc_samples": args.samples,
        "grid_x": gx.tolist(),
        "grid_y": gy.tolist(),
        "objective": obj.tolist(),
    }
    out = _out_dir(args, "jammer_location")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "location.json"), "w") as f:
        json.dump(result, f)
    print(json.dumps({k: result[k] for k in
                      ("best_xy_km", "pitch_km", "mc_samples")}, indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="slicesim",
        description="multi-cell slicing simulator: agents, jammers, ensembles")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a victim policy, then test it")
    _common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy, optionally under attack")
    _common(p)
    p.add_argument("--checkpoint", help="victim checkpoint (.npz)")
    p.add_argument("--jammer", help="jammer kind or 'none'")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="run several seeds, possibly in parallel")
    _common(p)
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("compare", help="tabulate summaries against references")
    p.add_argument("summaries", nargs="+", help="summary.json / sweep.json paths")
    p.add_argument("--table", choices=("slicing", "ensemble"), default="slicing")
    p.add_argument("--merge-sweeps", action="store_true")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("optimize-jammer-location",
                       help="grid search the expected-damage objective")
    _common(p)
    p.add_argument("--pitch", type=float, default=0.25)
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(fn=cmd_optimize)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConstraintViolation as exc:
        print(f"constraint violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
