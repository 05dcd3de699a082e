"""Deterministic SVG plots for runs and sweeps."""

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

# fixed hash salt + no timestamp so identical data gives identical bytes
matplotlib.rcParams["svg.hashsalt"] = "fgbsim"


def line_plot(xs, series: dict, xlabel: str, ylabel: str, out_path) -> Path:
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, ys in sorted(series.items()):
        ax.plot(xs, np.asarray(ys, dtype=float), marker="o", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path


def plot_run(results_csv, out_dir) -> list:
    """Per-round metric curves, averaged over repetitions."""
    results_csv, out_dir = Path(results_csv), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_round = defaultdict(lambda: defaultdict(list))
    with open(results_csv) as fh:
        for row in csv.DictReader(fh):
            t = int(row["round"])
            for metric in ("acc", "asr", "tasr"):
                if row[metric] != "":
                    per_round[metric][t].append(float(row[metric]))
    written = []
    for metric, by_round in sorted(per_round.items()):
        xs = sorted(by_round)
        ys = [float(np.mean(by_round[t])) for t in xs]
        written.append(line_plot(xs, {metric: ys}, "round", metric,
                                 out_dir / f"{metric}.svg"))
    return written


def plot_sweep(sweep_csv, out_dir) -> list:
    sweep_csv, out_dir = Path(sweep_csv), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(sweep_csv) as fh:
        rows = list(csv.DictReader(fh))
    xs = [row["value"] for row in rows]
    try:
        xs = [float(x) for x in xs]
    except ValueError:
        pass  # categorical factors (trigger type, position)
    written = []
    for metric in ("acc", "asr", "tasr"):
        ys = [float(row[f"{metric}_mean"]) if row[f"{metric}_mean"] != ""
              else np.nan for row in rows]
        written.append(line_plot(xs, {metric: ys}, "value", metric,
                                 out_dir / f"{metric}.svg"))
    return written
