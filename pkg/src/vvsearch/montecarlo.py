"""Batches of seeded trials with resumable output and summary statistics."""

from __future__ import annotations

import csv
import json
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .sim import World, run_trial, write_trial

_WORLD: World | None = None


def _init_worker(world):
    global _WORLD
    _WORLD = world


def _job(args):
    method, seed = args
    r = run_trial(_WORLD.cfg, method, _WORLD, seed=seed)
    return r


def read_trials(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    out = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line:
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                continue  # partially written line from an interrupted run
    return out


def run_batch(cfg: dict, methods, seeds, out_dir, jobs: int = 1, world: World | None = None,
              traces: bool = False, log=None) -> list[dict]:
    """Run every (method, seed) pair not already recorded in ``trials.jsonl``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "trials.jsonl"
    done = {(r["method"], r["seed"]) for r in read_trials(log_path) if not r.get("error")}
    todo = [(m, int(s)) for m in methods for s in seeds if (m, int(s)) not in done]
    if todo:
        world = world or World(cfg, log=log)
    with open(log_path, "a") as fh:
        def record(r):
            fh.write(json.dumps(r.summary(), sort_keys=True) + "\n")
            fh.flush()
            if traces:
                write_trial(r, out / "traces")
            if log:
                log(f"{r.method} seed {r.seed}: localized at {r.localized_step}"
                    + (f" ERROR {r.error.splitlines()[0]}" if r.error else ""))

        if jobs <= 1 or len(todo) <= 1:
            for m, s in todo:
                record(run_trial(cfg, m, world, seed=s))
        else:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(jobs, mp_context=ctx, initializer=_init_worker,
                                     initargs=(world,)) as ex:
                for r in ex.map(_job, todo):
                    record(r)
    rows = read_trials(log_path)
    write_summary(rows, out / "summary.csv")
    return rows


def _latest(rows):
    # a seed re-run after an error replaces the failed record
    keep = {}
    for r in rows:
        keep[(r["method"], r["seed"])] = r
    return list(keep.values())


def localization_times(rows, method: str) -> np.ndarray:
    """Per-trial localization step; unlocalized and failed trials count as inf."""
    t = [math.inf if r["localized_step"] is None or r.get("error") else float(r["localized_step"])
         for r in _latest(rows) if r["method"] == method]
    return np.asarray(t, dtype=float)


def summarize(rows) -> list[dict]:
    out = []
    for m in sorted({r["method"] for r in rows}):
        t = localization_times(rows, m)
        q1, med, q3 = (np.quantile(t, [0.25, 0.5, 0.75], method="higher") if len(t)
                       else (math.nan,) * 3)
        out.append({"method": m, "trials": len(t), "localized": int(np.isfinite(t).sum()),
                    "q1": float(q1), "median": float(med), "q3": float(q3)})
    return out


def write_summary(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["method", "trials", "localized", "q1", "median", "q3"])
        w.writeheader()
        for s in summarize(rows):
            w.writerow(s)


def percent_localized_curve(rows, method: str, max_steps: int) -> np.ndarray:
    """Percentage of trials localized by each step 0..max_steps."""
    t = localization_times(rows, method)
    steps = np.arange(max_steps + 1)
    if len(t) == 0:
        return np.zeros(len(steps))
    return 100.0 * (t[None, :] <= steps[:, None]).mean(axis=1)
