"""CSV tables and optional plots from a Monte-Carlo output directory."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .montecarlo import localization_times, percent_localized_curve, read_trials, summarize


def export(in_dir, max_steps: int = 120, plots: bool = False) -> list[Path]:
    src = Path(in_dir)
    rows = read_trials(src / "trials.jsonl")
    methods = sorted({r["method"] for r in rows})
    written = []

    curves = src / "curves.csv"
    with open(curves, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + methods)
        cols = [percent_localized_curve(rows, m, max_steps) for m in methods]
        for k in range(max_steps + 1):
            w.writerow([k] + [f"{c[k]:.4g}" for c in cols])
    written.append(curves)

    box = src / "box.csv"
    with open(box, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["method", "trials", "localized", "q1", "median", "q3"])
        w.writeheader()
        for s in summarize(rows):
            w.writerow(s)
    written.append(box)

    if plots and methods:
        written += _plots(src, rows, methods, max_steps)
    return written


def _plots(src: Path, rows, methods, max_steps) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    steps = np.arange(max_steps + 1)
    for m in methods:
        ax.plot(steps, percent_localized_curve(rows, m, max_steps), label=m)
    ax.set_xlabel("time step")
    ax.set_ylabel("% localized")
    ax.set_ylim(0, 100)
    ax.legend()
    fig.tight_layout()
    p1 = src / "curves.svg"
    fig.savefig(p1)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    data = []
    for m in methods:
        t = localization_times(rows, m)
        data.append(np.where(np.isfinite(t), t, max_steps))  # censored trials drawn at the cap
    ax.boxplot(data)
    ax.set_xticks(range(1, len(methods) + 1), methods)
    ax.set_ylabel("localization step (capped)")
    fig.tight_layout()
    p2 = src / "box.svg"
    fig.savefig(p2)
    plt.close(fig)
    return [p1, p2]
