"""``qning`` command line: run, sweep-kappa, sweep-memory, report.

Configuration comes from an optional JSON file; flags override its keys.
The output directory defaults to ``$QNING_OUTPUT_DIR`` (then ``results``).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import bench
from .traces import read_csv, read_json

OUTPUT_ENV = "QNING_OUTPUT_DIR"


def _synthetic(text):
    """``kind:n:d[:key=value,...]``, e.g. ``regression:1000:50:correlation=0.5``."""
    parts = text.split(":")
    if len(parts) < 3:
        raise argparse.ArgumentTypeError("expected kind:n:d[:key=value,...]")
    params = {"kind": parts[0], "n": int(parts[1]), "d": int(parts[2])}
    if len(parts) > 3 and parts[3]:
        for item in parts[3].split(","):
            key, _, value = item.partition("=")
            params[key] = float(value)
    return params


def _common(p):
    p.add_argument("--config", help="JSON experiment config file")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--dataset", help="LIBSVM file")
    src.add_argument("--synthetic", type=_synthetic, metavar="KIND:N:D[:K=V,...]")
    p.add_argument("--formulation", choices=bench.FORMULATIONS)
    p.add_argument("--methods", help="comma separated subset of " + ",".join(bench.METHODS))
    p.add_argument("--kappa", type=float)
    p.add_argument("--memory", type=int)
    p.add_argument("--budget", type=float, help="evaluation budget in passes")
    p.add_argument("--seed", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--target", type=float, help="stop at this relative suboptimality")
    p.add_argument("--name")
    p.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV} or ./results)")


def build_parser():
    parser = argparse.ArgumentParser(prog="qning", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run every configured method"),
                        ("sweep-kappa", "QNing methods over kappa = 10^i kappa_0, i=-3..3"),
                        ("sweep-memory", "QNing methods over l in {1,2,5,10,20,100}")):
        _common(sub.add_parser(name, help=help_))
    rep = sub.add_parser("report", help="summarize trace files")
    rep.add_argument("traces", nargs="+", help="trace .csv or .json files")
    return parser


def load_config(args):
    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise SystemExit(f"cannot read config {args.config}: {exc}")
    if args.dataset:
        doc["dataset"] = args.dataset
    if args.synthetic:
        doc["dataset"] = args.synthetic
    if args.methods:
        doc["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    for key in ("formulation", "kappa", "memory", "budget", "seed", "lam", "mu", "target",
                "name", "output"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    if "output" not in doc:
        doc["output"] = os.environ.get(OUTPUT_ENV, "results")
    if "dataset" not in doc:
        raise SystemExit("no dataset: give --dataset, --synthetic or a config file")
    return bench.ExperimentConfig.from_dict(doc)


def _read_trace(path):
    if path.endswith(".json"):
        return read_json(path)
    stem = os.path.basename(path).rsplit(".", 1)[0]
    return read_csv(path, method=stem.split("__")[1] if "__" in stem else stem)


def _print_files(files, out):
    for key, paths in files.items():
        label = key if isinstance(key, str) else " ".join(str(k) for k in key)
        print(f"{label}: {paths[0]}", file=out)


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            for path in args.traces:
                row = bench.summarize(_read_trace(path))
                print(path + "  " + "  ".join(f"{k}={v}" for k, v in row.items()), file=out)
            return 0
        cfg = load_config(args)
        if args.command == "run":
            files = bench.run_experiment(cfg)
        elif args.command == "sweep-kappa":
            files = bench.sweep_kappa(cfg)
        else:
            files = bench.sweep_memory(cfg)
    except (OSError, ValueError, TypeError) as exc:
        print(f"qning: error: {exc}", file=sys.stderr)
        return 2
    _print_files(files, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
