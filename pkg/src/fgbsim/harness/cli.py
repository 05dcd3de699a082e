"""Command-line entry points.

Subcommands: run, sweep, convert, plot, synth.  Output lands under --out
when given, else under $FGBSIM_OUT_ROOT, else ./runs.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import FgbsimError
from .config import FACTORS, config_fingerprint, parse_config
from .datasets import (graphset_to_json, load_dataset, node_graph_to_json)
from .experiment import run_experiment, sweep
from .plotting import plot_run, plot_sweep
from .synth import (GRAPH_PRESETS, NODE_PRESETS, synth_dataset,
                    write_graph_dataset, write_node_dataset)

ENV_OUT_ROOT = "FGBSIM_OUT_ROOT"


def _out_root(arg_out) -> Path:
    if arg_out:
        return Path(arg_out)
    return Path(os.environ.get(ENV_OUT_ROOT, "runs"))


def _parse_values(raw: str) -> list:
    values = []
    for piece in raw.split(","):
        piece = piece.strip()
        try:
            values.append(int(piece))
        except ValueError:
            try:
                values.append(float(piece))
            except ValueError:
                values.append(piece)
    return values


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    out = Path(args.out) if args.out \
        else _out_root(None) / f"run-{config_fingerprint(cfg)}"
    summary = run_experiment(cfg, out)
    print(f"wrote {out}/results.csv  summary: "
          f"acc={summary['final_acc']} asr={summary['final_asr']} "
          f"tasr={summary['final_tasr']}")
    if len(summary["failed_reps"]) == cfg.repetitions:
        # per-rep errors carry full tracebacks; surface just the exception
        reasons = sorted({r["error"].strip().splitlines()[-1]
                          for r in summary["per_rep"] if r["error"]})
        why = f": {reasons[0]}" if reasons else ""
        print(f"all repetitions failed{why}", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    values = _parse_values(args.values)
    out = Path(args.out) if args.out \
        else _out_root(None) / f"sweep-{args.factor}-{config_fingerprint(cfg)}"
    result = sweep(cfg, args.factor, values, out)
    print(f"wrote {out}/sweep.csv with {len(result['points'])} points")
    return 0


def _cmd_convert(args) -> int:
    data = load_dataset(args.task, args.input, args.format)
    blob = node_graph_to_json(data) if args.task == "node" \
        else graphset_to_json(data)
    Path(args.output).write_text(json.dumps(blob))
    print(f"wrote {args.output}")
    return 0


def _cmd_plot(args) -> int:
    results = Path(args.results)
    out = Path(args.out) if args.out else results
    if (results / "sweep.csv").exists():
        written = plot_sweep(results / "sweep.csv", out)
    elif (results / "results.csv").exists():
        written = plot_run(results / "results.csv", out)
    else:
        print(f"no sweep.csv or results.csv under {results}",
              file=sys.stderr)
        return 1
    print("wrote " + " ".join(str(p) for p in written))
    return 0


def _cmd_synth(args) -> int:
    task = args.task
    if task is None:
        task = "node" if args.name in NODE_PRESETS else "graph"
    data = synth_dataset(args.name, task, feature_dim=args.feature_dim,
                         seed=args.seed)
    out = _out_root(args.out)
    if task == "node":
        where = write_node_dataset(data, out, args.name)
    else:
        where = write_graph_dataset(data, out)
    print(f"wrote {where}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgbsim",
        description="Federated GNN backdoor-attack simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="vary one factor over a value list")
    p.add_argument("--config", required=True)
    p.add_argument("--factor", required=True, choices=sorted(FACTORS))
    p.add_argument("--values", required=True,
                   help="comma-separated factor values")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("convert", help="dataset file(s) to canonical JSON")
    p.add_argument("--task", required=True, choices=("node", "graph"))
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="auto",
                   choices=("auto", "citation", "tu", "json"))
    p.add_argument("--output", required=True)
    p.set_defaults(fn=_cmd_convert)

    p = sub.add_parser("plot", help="render SVG curves from results")
    p.add_argument("--results", required=True,
                   help="directory holding results.csv or sweep.csv")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_plot)

    p = sub.add_parser("synth", help="write a synthetic dataset to disk")
    p.add_argument("--name", required=True,
                   choices=sorted(NODE_PRESETS) + sorted(GRAPH_PRESETS))
    p.add_argument("--task", default=None, choices=("node", "graph"))
    p.add_argument("--feature-dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FgbsimError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
