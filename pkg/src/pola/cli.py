"""Command-line entry point: ``pola run | tune | plotdata | validate-data``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .datasets import DATASETS, load_dataset
from .driver import PretrainConfig, Variant, prepare, resolve_method
from .experiment import (ALL_METHODS, ExperimentConfig, emit_plot_data, load_config, read_summary,
                         method_spec, run_experiment, sweep_points)
from .windowing import count_samples

log = logging.getLogger("pola")


def _csv_list(conv):
    def parse(text):
        return [conv(v) for v in text.split(",") if v.strip()]
    return parse


def _sweep(text):
    key, _, values = text.partition("=")
    if not values:
        raise argparse.ArgumentTypeError("sweep must look like b=2,6,10")
    conv = float if key.strip() == "eta" else int
    return key.strip(), [conv(v) for v in values.split(",")]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML/JSON config or a manifest.json from an earlier run")
    p.add_argument("--dataset", choices=[*DATASETS, "csv"])
    p.add_argument("--data", dest="data_path", help="path to the dataset file")
    p.add_argument("--window-len", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--methods", type=_csv_list(str), help=f"comma list from {','.join(ALL_METHODS)}")
    p.add_argument("--cells", type=_csv_list(str), help="comma list of RNN,LSTM,GRU")
    p.add_argument("--seeds", type=_csv_list(int))
    p.add_argument("--b", type=int, help="online batch size")
    p.add_argument("--gamma", type=float, help="fix the maximum learning rate instead of tuning")
    p.add_argument("--q", type=int, help="fix the beta moving-average window instead of tuning")
    p.add_argument("--k", type=int, help="meta gradient steps (POLA-GD)")
    p.add_argument("--eta", type=float, help="meta learning rate (POLA-GD)")
    p.add_argument("--reduction", choices=["mean", "sum"])
    p.add_argument("--epochs", type=int, help="pre-training epochs")
    p.add_argument("--pretrain-samples", type=int)
    p.add_argument("--hidden", dest="hidden_units", type=int)
    p.add_argument("--workers", type=int)


def build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    doc = cfg.to_dict()
    for key in ("dataset", "data_path", "window_len", "horizon", "methods", "cells", "seeds", "b",
                "gamma", "q", "k", "eta", "reduction", "hidden_units", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    if getattr(args, "sweep", None):
        doc["sweep"] = dict(args.sweep)
    pre = dict(doc["pretrain"])
    if args.epochs is not None:
        pre["epochs"] = args.epochs
    if args.pretrain_samples is not None:
        pre["num_samples"] = args.pretrain_samples
    doc["pretrain"] = pre
    if args.config and any(getattr(args, k, None) is not None for k in ("b", "k", "eta", "gamma", "q")):
        doc["resolved"] = {}  # overrides invalidate recorded tuning results
    return ExperimentConfig.from_dict(doc)


def cmd_run(args) -> int:
    cfg = build_config(args)
    out = run_experiment(cfg, args.out)
    for row in read_summary(out / "summary.csv"):
        extra = f" k={row['k']} eta={row['eta']}" if row["k"] else ""
        print(f"{row['dataset']:>9} {row['cell']:>4} {row['method']:>15} b={row['b']}{extra}  "
              f"nrmse={row['mean_nrmse']:.4f} +- {row['std_nrmse']:.4f} (n={row['n_seeds']})")
    print(f"results written to {out}")
    return 0


def cmd_tune(args) -> int:
    cfg = build_config(args)
    series = load_dataset(cfg.dataset, cfg.data_path)
    m, n = cfg.dims
    out = []
    for cell in cfg.cells:
        for seed in cfg.seeds:
            prep = prepare(series, m, n, cell, seed, PretrainConfig(**cfg.pretrain), cfg.hidden_units)
            for pt in sweep_points(cfg):
                for name in cfg.methods:
                    if Variant.parse(name) is Variant.FROZEN:
                        continue
                    tuning: dict = {}
                    spec = resolve_method(method_spec(cfg, name, pt), prep, pt["b"], tuning)
                    rec = {"cell": cell.upper(), "seed": seed, "method": spec.name, "b": pt["b"],
                           "gamma": spec.gamma, "q": spec.q if spec.variant.is_pola else None, **tuning}
                    out.append(rec)
                    print(json.dumps(rec))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(out, fh, indent=2)
    return 0


def cmd_plotdata(args) -> int:
    for path in emit_plot_data(args.results, window=args.window, horizon=args.horizon):
        print(path)
    return 0


def cmd_validate(args) -> int:
    series = load_dataset(args.dataset, args.data)
    spec = DATASETS.get(args.dataset)
    print(f"{args.dataset}: {len(series)} observations, {series.dims} dimension(s)")
    if series.index:
        print(f"  range {series.index[0]} .. {series.index[-1]}")
    for j in range(series.dims):
        print(f"  dim {j}: mean={series.per_dim_mean[j]:.4f} std={series.per_dim_std[j]:.4f}")
    if spec is not None:
        c = count_samples(len(series), spec.window_len, spec.horizon)
        print(f"  window_len={spec.window_len} horizon={spec.horizon} -> {c} samples")
    if args.strict:
        expected = {"sunspot": 3259, "power": 1442}.get(args.dataset)
        if expected is not None and len(series) != expected:
            print(f"error: expected {expected} observations", file=sys.stderr)
            return 1
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pola", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment grid")
    _add_common(p)
    p.add_argument("--sweep", type=_sweep, action="append", help="e.g. b=2,6,10,14,18 (repeatable)")
    p.add_argument("--out", required=True, help="results directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("tune", help="tune gamma and q on the pre-training split")
    _add_common(p)
    p.add_argument("--sweep", type=_sweep, action="append")
    p.add_argument("--out", help="write tuning results as JSON")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("plotdata", help="emit figure CSVs from a results directory")
    p.add_argument("results")
    p.add_argument("--window", type=int, help="error smoothing window (default 24 for sunspot, else 1)")
    p.add_argument("--horizon", type=int, help="displayed forecast step (default: last)")
    p.set_defaults(func=cmd_plotdata)

    p = sub.add_parser("validate-data", help="load a dataset and print checks")
    p.add_argument("dataset", choices=["sunspot", "power", "csv"])
    p.add_argument("data")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # one diagnostic line, nonzero exit
        if args.verbose:
            log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
