"""Command-line surface for the knowledge-pool pipeline.

Subcommands: scene-gen, simulate, learn, predict, pool.  Exit codes:
0 success, 1 runtime failure, 2 usage error.  Every stochastic stage
requires an explicit --seed so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import forest as rf
from .features import RealizationConfig, load_dataset, save_dataset
from .geometry import canonical_street_scene, load_scene, save_scene, atomic_write_text
from .pipeline import (FitCache, build_pool, cdf_csv, learn_positions,
                       loo_evaluate, make_pool, simulate_trajectory,
                       spectrum_csv, summary_csv)
from .pool import (Pool, PoolFileError, PoolVersionError, load_pool, save_pool,
                   similarity)
from .predict import DEFAULT_TAU
from .propagation import path_loss


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _apply_config(args, parser):
    """Fill unset options from the optional JSON config file."""
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config file: {exc}")
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) is None:
            setattr(args, attr, value)
    return args


def _require_seed(args, parser):
    if args.seed is None:
        parser.error("--seed is required for stochastic stages")


def _out(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def cmd_scene_gen(args, parser) -> int:
    scene, traj = canonical_street_scene(
        spacing_m=args.spacing if args.spacing is not None else 5.0,
        frequency_hz=args.frequency_hz if args.frequency_hz is not None else 28e9,
        reflection_loss_db=args.reflection_loss_db if args.reflection_loss_db is not None else 10.0,
        seed=args.seed if args.seed is not None else 0)
    path = _out(args, "scene.json")
    save_scene(path, scene, traj)
    if not args.quiet:
        print(f"wrote {path}")
        print("position  state")
        for i, rx in enumerate(traj.positions, 1):
            s = path_loss(scene, rx, position_id=i)
            print(f"{i:8d}  {'LOS' if s.los else 'NLOS'}")
    return 0


def cmd_simulate(args, parser) -> int:
    _require_seed(args, parser)
    if not args.scene or not os.path.exists(args.scene):
        return _fail(f"scene file not found: {args.scene}")
    scene, traj = load_scene(args.scene)
    cfg = RealizationConfig(
        n_realizations=args.n_realizations if args.n_realizations is not None else 200,
        scatterer_jitter_sigma=args.scatterer_jitter if args.scatterer_jitter is not None else 0.5,
        rx_jitter_sigma=args.rx_jitter if args.rx_jitter is not None else 0.2,
        seed=args.seed)
    rows = simulate_trajectory(scene, traj, cfg)
    path = _out(args, "dataset.csv")
    save_dataset(path, rows)
    if not args.quiet:
        print(f"wrote {path} ({len(rows)} rows)")
    return 0


def _forest_params(args) -> rf.ForestParams:
    return rf.ForestParams(
        n_trees=args.n_trees if args.n_trees is not None else 100,
        max_depth=args.max_depth if args.max_depth is not None else 12,
        min_leaf=args.min_leaf if args.min_leaf is not None else 5,
        features_per_split=args.features_per_split,
        seed=args.seed)


def cmd_learn(args, parser) -> int:
    _require_seed(args, parser)
    for name, p in (("scene", args.scene), ("dataset", args.dataset)):
        if not p or not os.path.exists(p):
            return _fail(f"{name} file not found: {p}")
    scene, traj = load_scene(args.scene)
    rows = load_dataset(args.dataset)
    params = _forest_params(args)
    cache = FitCache()
    knowledge = learn_positions(scene, traj, rows, params, cache=cache)
    for k in knowledge:
        if k.degenerate:
            print(f"warning: position {k.position_id} has degenerate weights; "
                  "no spectrum emitted", file=sys.stderr)
    pool = make_pool(
        capacity=args.capacity if args.capacity is not None else 32,
        theta_high=args.theta_high if args.theta_high is not None else 0.95,
        theta_low=args.theta_low if args.theta_low is not None else 0.40,
        forest_params=params)
    build_pool(scene, traj, rows, pool, cache=cache)
    spath = _out(args, "spectrum.csv")
    atomic_write_text(spath, spectrum_csv(knowledge))
    ppath = _out(args, "pool.json")
    save_pool(ppath, pool)
    if not args.quiet:
        print(f"wrote {spath} and {ppath} ({len(pool.entries)} entries)")
    return 0


def cmd_predict(args, parser) -> int:
    for name, p in (("scene", args.scene), ("dataset", args.dataset),
                    ("pool", args.pool)):
        if not p or not os.path.exists(p):
            return _fail(f"{name} file not found: {p}")
    scene, traj = load_scene(args.scene)
    rows = load_dataset(args.dataset)
    try:
        pool_tmpl = load_pool(args.pool)
    except PoolVersionError as exc:
        return _fail(str(exc))
    except PoolFileError as exc:
        return _fail(str(exc))
    tau = args.tau if args.tau is not None else DEFAULT_TAU
    _, reports = loo_evaluate(scene, traj, rows, pool_template=pool_tmpl,
                              tau=tau, knn_k=args.k if args.k is not None else 3)
    cpath = _out(args, "cdf.csv")
    atomic_write_text(cpath, cdf_csv(reports))
    spath = _out(args, "summary.csv")
    atomic_write_text(spath, summary_csv(reports))
    if not args.quiet:
        for method in sorted(reports):
            r = reports[method]
            print(f"{method}: mean={r.mean:.3f} rmse={r.rmse:.3f} "
                  f"p80={r.p80:.3f} n={len(r.errors)} capped={r.n_capped}")
        print(f"wrote {cpath} and {spath}")
    return 0


def cmd_pool(args, parser) -> int:
    try:
        pool = load_pool(args.pool_file)
    except PoolVersionError as exc:
        return _fail(str(exc))
    except PoolFileError as exc:
        return _fail(str(exc))
    if args.action == "show":
        print(f"{len(pool.entries)} entries "
              f"(capacity {pool.capacity}, thresholds {pool.theta_low}/{pool.theta_high})")
        ids = sorted(pool.entries)
        for eid in ids:
            e = pool.entries[eid]
            state = "degenerate" if e.weights.degenerate else "ok"
            print(f"  entry {eid}: position {e.context.position_id} "
                  f"{'LOS' if e.context.los else 'NLOS'} "
                  f"utilization={e.utilization_count} {state}")
        if len(ids) > 1 and not args.quiet:
            print("similarity matrix:")
            for a in ids:
                row = " ".join(
                    f"{similarity(pool.entries[a].context, pool.entries[b].context):.3f}"
                    for b in ids)
                print(f"  {a}: {row}")
    elif args.action == "evict":
        if args.capacity is not None:
            pool.capacity = args.capacity
        removed = pool.sort_and_evict()
        save_pool(args.pool_file, pool)
        print(f"evicted {len(removed)} entries: {removed}")
    elif args.action == "merge":
        if not args.into or not os.path.exists(args.into):
            return _fail(f"target pool not found: {args.into}")
        target = load_pool(args.into)
        outcomes = []
        for eid in sorted(pool.entries):
            e = pool.entries[eid]
            outcome, new_id = target.ingest(e.context, e.train_X, e.train_y,
                                            now=e.updated_at)
            outcomes.append((eid, outcome.value, new_id))
        save_pool(args.into, target)
        for eid, outcome, new_id in outcomes:
            print(f"entry {eid}: {outcome} -> {new_id}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rekpool", description="Radio environment knowledge pool pipeline")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for stochastic stages")
    parser.add_argument("--config", default=None, help="JSON config file; "
                        "flags override config values")
    parser.add_argument("--out-dir", default=".", help="output directory")
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene-gen", help="generate the canonical street scene")
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--frequency-hz", type=float, default=None)
    p.add_argument("--reflection-loss-db", type=float, default=None)
    p.set_defaults(func=cmd_scene_gen)

    p = sub.add_parser("simulate", help="generate the realization dataset")
    p.add_argument("--scene", required=True)
    p.add_argument("--n-realizations", type=int, default=None)
    p.add_argument("--scatterer-jitter", type=float, default=None)
    p.add_argument("--rx-jitter", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", help="fit per-position knowledge and build the pool")
    p.add_argument("--scene", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--n-trees", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=None)
    p.add_argument("--features-per-split", type=int, default=None)
    p.add_argument("--capacity", type=int, default=None)
    p.add_argument("--theta-high", type=float, default=None)
    p.add_argument("--theta-low", type=float, default=None)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("predict", help="leave-one-position-out evaluation")
    p.add_argument("--scene", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("pool", help="inspect or mutate a pool file")
    p.add_argument("action", choices=("show", "evict", "merge"))
    p.add_argument("pool_file")
    p.add_argument("--capacity", type=int, default=None)
    p.add_argument("--into", default=None, help="target pool for merge")
    p.set_defaults(func=cmd_pool)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config(args, parser)
    try:
        return args.func(args, parser)
    except (ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
