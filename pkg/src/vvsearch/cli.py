"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config, make_config, u_example_config


def _log(msg):
    print(msg, file=sys.stderr)


def _config(args):
    if getattr(args, "config", None):
        return load_config(args.config)
    return make_config()


def cmd_show_config(args):
    cfg = u_example_config() if args.u_example else make_config()
    print(json.dumps(cfg, indent=2))
    return 0


def cmd_gen_env(args):
    from .geometry import save_environment
    from .tiles import generate_preset

    env = generate_preset(args.density, args.seed, tuple(args.grid), h_feasible=args.h_feasible)
    save_environment(env, args.out)
    _log(f"wrote {args.out} ({len(env.obstacles)} buildings, {len(env.road.edges)} road edges)")
    return 0


def cmd_precompute(args):
    from .sim import World

    cfg = _config(args)
    if args.cache_dir:
        cfg["cache_dir"] = args.cache_dir
    if not cfg["cache_dir"]:
        raise ConfigError("precompute needs cache_dir in the config or --cache-dir")
    world = World(cfg, log=_log)
    _log(f"cached {world.slices.shape[0]} visibility planes and reach primitives in {cfg['cache_dir']}")
    return 0


def cmd_simulate(args):
    from .sim import run_trial, write_trial

    cfg = _config(args)
    r = run_trial(cfg, args.planner, seed=args.seed)
    if r.error:
        _log(r.error)
        return 1
    trace, _ = write_trial(r, args.out)
    print(json.dumps(r.summary()))
    _log(f"trace written to {trace}")
    return 0


def cmd_montecarlo(args):
    from .montecarlo import run_batch, summarize

    cfg = _config(args)
    seeds = range(args.first_seed, args.first_seed + args.trials)
    rows = run_batch(cfg, args.methods, seeds, args.out, jobs=args.jobs, traces=args.traces,
                     log=_log)
    for s in summarize(rows):
        print(json.dumps(s))
    return 0


def cmd_export(args):
    from .export import export

    for p in export(args.in_dir, args.max_steps, args.plots):
        _log(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vvsearch", description="UAV search for a moving road target")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("show-config", help="print the default configuration")
    p.add_argument("--u-example", action="store_true", help="parameters of the U-road example")
    p.set_defaults(fn=cmd_show_config)

    p = sub.add_parser("gen-env", help="generate a tile-map environment")
    p.add_argument("--density", choices=("sparse", "medium", "dense"), default="medium")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--grid", type=int, nargs=2, default=(6, 6), metavar=("ROWS", "COLS"))
    p.add_argument("--h-feasible", type=float, default=120.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_env)

    p = sub.add_parser("precompute", help="fill the visibility and reachability caches")
    p.add_argument("--config")
    p.add_argument("--cache-dir")
    p.set_defaults(fn=cmd_precompute)

    p = sub.add_parser("simulate", help="run one trial and write its trace")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--planner", choices=("idastar", "lawnmower", "replay"), default="idastar")
    p.add_argument("--out", default=".")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("montecarlo", help="run seeded trials for one or more methods")
    p.add_argument("--config")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--methods", nargs="+", default=["idastar", "lawnmower"],
                   choices=("idastar", "lawnmower", "replay"))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--traces", action="store_true", help="also write per-trial trace files")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_montecarlo)

    p = sub.add_parser("export", help="write curves and box tables from a Monte-Carlo run")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--max-steps", type=int, default=120)
    p.add_argument("--plots", action="store_true")
    p.set_defaults(fn=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
