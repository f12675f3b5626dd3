"""Experiment grids: datasets x cells x seeds x sweep points x methods.

A run writes ``traces/*.csv`` (one per method run), ``summary.csv`` and
``manifest.json`` to the output directory.  The manifest stores the
resolved configuration, including every tuned gamma and q, and can be fed
back to :func:`run_experiment` to reproduce the results.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .datasets import DATASETS, load_dataset
from .driver import MethodSpec, PretrainConfig, Prepared, RunTrace, Variant, evaluate, prepare, run_method
from .meta import CandidateSet, GdMetaConfig
from .windowing import Series

log = logging.getLogger(__name__)

ALL_METHODS = ("pretrained", "online-sgd", "online-rmsprop", "pola-fs", "pola-gd")
SWEEP_KEYS = ("b", "k", "eta")
SMOOTHING = {"sunspot": 24}


@dataclass
class ExperimentConfig:
    dataset: str = "sunspot"
    data_path: str | None = None
    window_len: int | None = None
    horizon: int | None = None
    methods: list = field(default_factory=lambda: list(ALL_METHODS))
    cells: list = field(default_factory=lambda: ["RNN"])
    seeds: list = field(default_factory=lambda: list(range(10)))
    b: int = 10
    gamma: float | None = None
    q: int | None = None
    k: int = 3
    eta: float = 0.1
    candidates: list = field(default_factory=lambda: [1.0, 0.1, 0.01, 0.001, 0.0001, 0.0])
    reduction: str = "mean"
    sweep: dict = field(default_factory=dict)
    hidden_units: int = 10
    pretrain: dict = field(default_factory=lambda: asdict(PretrainConfig()))
    workers: int = 1
    resolved: dict = field(default_factory=dict)  # run id -> {"gamma": .., "q": ..}

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if int(self.b) < 2:
            raise ValueError("online batch size b must be > 1")
        for key, values in self.sweep.items():
            if key not in SWEEP_KEYS:
                raise ValueError(f"cannot sweep over {key!r}; choose from {SWEEP_KEYS}")
            if not values:
                raise ValueError(f"empty sweep grid for {key!r}")
            if key == "b" and min(int(v) for v in values) < 2:
                raise ValueError("online batch size b must be > 1")
        for m in self.methods:
            MethodSpec(Variant.parse(m))
        if self.dataset not in (*DATASETS, "csv"):
            raise ValueError(f"unknown dataset {self.dataset!r}")

    @property
    def dims(self) -> tuple[int, int]:
        spec = DATASETS.get(self.dataset, DATASETS["sunspot"])
        return (self.window_len or spec.window_len, self.horizon or spec.horizon)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


def sweep_points(cfg: ExperimentConfig) -> list[dict]:
    base = {"b": cfg.b, "k": cfg.k, "eta": cfg.eta}
    keys = [k for k in SWEEP_KEYS if k in cfg.sweep]
    points = []
    for combo in itertools.product(*(cfg.sweep[k] for k in keys)):
        pt = dict(base)
        pt.update(zip(keys, combo))
        pt["b"] = int(pt["b"])
        pt["k"] = int(pt["k"])
        pt["eta"] = float(pt["eta"])
        points.append(pt)
    return points or [base]


def method_spec(cfg: ExperimentConfig, name: str, point: dict) -> MethodSpec:
    return MethodSpec(
        Variant.parse(name), gamma=cfg.gamma, q=cfg.q,
        candidates=CandidateSet(tuple(cfg.candidates)),
        gd=GdMetaConfig(point["k"], point["eta"]),
        reduction=cfg.reduction,
    )


def run_id(dataset: str, cell: str, method: str, point: dict, seed: int, variant: Variant) -> str:
    tag = f"b{point['b']}"
    if variant is Variant.POLA_GD:
        tag += f"_k{point['k']}_eta{point['eta']!r}"
    return f"{dataset}_{cell}_{method}_{tag}_seed{seed}"


def _jobs(cfg: ExperimentConfig):
    """(cell, seed, [(point, method)]) work units; GD-only sweep keys do not
    multiply the other methods."""
    points = sweep_points(cfg)
    for cell in cfg.cells:
        for seed in cfg.seeds:
            units, seen = [], set()
            for pt in points:
                for name in cfg.methods:
                    v = Variant.parse(name)
                    rid = run_id(cfg.dataset, str(cell).upper(), v.value, pt, seed, v)
                    if rid in seen:
                        continue
                    seen.add(rid)
                    units.append((pt, v.value))
            yield str(cell).upper(), int(seed), units


# prepare() is deterministic, so grids sharing (series, cell, seed) reuse it
_PREP_CACHE: dict = {}
_PREP_CACHE_SIZE = 32


def clear_cache() -> None:
    _PREP_CACHE.clear()


def cached_prepare(series: Series, m: int, n: int, cell: str, seed: int, pcfg: PretrainConfig,
                   hidden_units: int, need_warm: bool = True) -> Prepared:
    key = (hashlib.sha1(series.values.tobytes()).hexdigest(), m, n, str(cell).upper(), seed, pcfg, hidden_units)
    prep = _PREP_CACHE.get(key)
    if prep is None or (need_warm and prep.warm is None):
        prep = prepare(series, m, n, cell, seed, pcfg, hidden_units, need_warm=need_warm)
        if len(_PREP_CACHE) >= _PREP_CACHE_SIZE:
            _PREP_CACHE.pop(next(iter(_PREP_CACHE)))
        _PREP_CACHE[key] = prep
    return prep


def _load(cfg: ExperimentConfig) -> Series:
    return load_dataset(cfg.dataset, cfg.data_path)


def _run_job(cfg_doc: dict, cell: str, seed: int, units: list, out_dir: str) -> list[dict]:
    cfg = ExperimentConfig.from_dict(cfg_doc)
    series = _load(cfg)
    m, n = cfg.dims
    pcfg = PretrainConfig(**cfg.pretrain)
    need_warm = any(
        Variant.parse(name) is not Variant.FROZEN
        and run_id(cfg.dataset, cell, name, pt, seed, Variant.parse(name)) not in cfg.resolved
        for pt, name in units
    )
    prep = cached_prepare(series, m, n, cell, seed, pcfg, cfg.hidden_units, need_warm)
    rows = []
    for pt, name in units:
        variant = Variant.parse(name)
        rid = run_id(cfg.dataset, cell, name, pt, seed, variant)
        spec = method_spec(cfg, name, pt)
        if rid in cfg.resolved:
            spec = replace(spec, gamma=cfg.resolved[rid]["gamma"], q=cfg.resolved[rid]["q"])
        tuning: dict = {}
        trace, resolved = run_method(spec, prep, pt["b"], tuning=tuning)
        write_trace(trace, Path(out_dir) / "traces" / f"{rid}.csv")
        rows.append({
            "run_id": rid, "dataset": cfg.dataset, "cell": cell, "method": name, "seed": seed,
            "b": pt["b"],
            "k": pt["k"] if variant is Variant.POLA_GD else "",
            "eta": pt["eta"] if variant is Variant.POLA_GD else "",
            "gamma": resolved.gamma, "q": resolved.q if variant.is_pola else None,
            "nrmse": evaluate(trace, series), "updates": len(trace.updates),
            "tuning": tuning,
        })
        log.info("%s nrmse=%.4f gamma=%s q=%s", rid, rows[-1]["nrmse"], resolved.gamma, resolved.q)
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return "" if v is None else str(v)


def write_trace(trace: RunTrace, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    T, n, d = trace.pred.shape
    labels = [f"h{h + 1}" if d == 1 else f"h{h + 1}_d{j + 1}" for h in range(n) for j in range(d)]
    pred = trace.pred.reshape(T, -1)
    target = trace.target.reshape(T, -1)
    se = trace.squared_error
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "timestamp_index", *[f"pred_{c}" for c in labels],
                    *[f"target_{c}" for c in labels], "squared_error", "gamma_t", "beta_v"])
        for k in range(T):
            w.writerow([k, int(trace.t[k]), *[repr(float(v)) for v in pred[k]],
                        *[repr(float(v)) for v in target[k]], repr(float(se[k])),
                        repr(float(trace.gamma_t[k])), _fmt(float(trace.beta_v[k]))])


def read_trace(path) -> RunTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    pred_cols = [i for i, h in enumerate(header) if h.startswith("pred_")]
    tgt_cols = [i for i, h in enumerate(header) if h.startswith("target_")]
    for col in ("timestamp_index", "gamma_t", "beta_v", "squared_error"):
        if col not in header:
            raise ValueError(f"{path}: missing trace column {col!r}")
    labels = [header[i][5:] for i in pred_cols]
    n = len({lab.split("_")[0] for lab in labels})
    d = len(labels) // n
    T = len(rows)
    arr = lambda cols: np.array([[float(r[i]) for i in cols] for r in rows]).reshape(T, n, d)
    col = header.index
    return RunTrace(
        t=np.array([int(r[col("timestamp_index")]) for r in rows]),
        pred=arr(pred_cols), target=arr(tgt_cols),
        gamma_t=np.array([float(r[col("gamma_t")]) for r in rows]),
        beta_v=np.array([float(r[col("beta_v")]) if r[col("beta_v")] else math.nan for r in rows]),
        horizon=n,
    )


SUMMARY_FIELDS = ["dataset", "cell", "method", "b", "k", "eta", "n_seeds", "mean_nrmse", "std_nrmse"]


def summarize(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        key = (r["dataset"], r["cell"], r["method"], r["b"], r["k"], r["eta"])
        groups.setdefault(key, []).append(r["nrmse"])
    out = []
    for key, vals in groups.items():
        arr = np.array(vals)
        out.append(dict(zip(SUMMARY_FIELDS, (*key, len(vals), float(arr.mean()), float(arr.std())))))
    return out


def write_summary(summary: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for row in summary:
            w.writerow([_fmt(row[f]) for f in SUMMARY_FIELDS])


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["mean_nrmse"] = float(r["mean_nrmse"])
        r["std_nrmse"] = float(r["std_nrmse"])
        r["n_seeds"] = int(r["n_seeds"])
    return rows


def run_experiment(config: ExperimentConfig, out_dir) -> Path:
    """Execute the grid and write traces, summary.csv and manifest.json."""
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    _load(config)  # fail fast on a missing or malformed data file
    doc = config.to_dict()
    jobs = list(_jobs(config))
    rows: list[dict] = []
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_job, doc, cell, seed, units, str(out)) for cell, seed, units in jobs]
            for fut in futures:
                rows.extend(fut.result())
    else:
        for cell, seed, units in jobs:
            rows.extend(_run_job(doc, cell, seed, units, str(out)))
    rows.sort(key=lambda r: r["run_id"])
    summary = summarize(rows)
    write_summary(summary, out / "summary.csv")
    manifest = dict(doc)
    manifest["resolved"] = {r["run_id"]: {"gamma": r["gamma"], "q": r["q"]} for r in rows}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    with open(out / "runs.json", "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
    return out


def load_config(path) -> ExperimentConfig:
    """Read a YAML or JSON experiment config (a manifest is also a valid config)."""
    import yaml

    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    return ExperimentConfig.from_dict(doc)


# -- plot data ------------------------------------------------------------------

def moving_average(x, window: int) -> np.ndarray:
    """Centred moving average in 'valid' mode (length ``len(x) - window + 1``)."""
    x = np.asarray(x, dtype=np.float64)
    if window < 1 or window > x.size:
        raise ValueError("window must lie in [1, len(x)]")
    return np.convolve(x, np.full(window, 1.0 / window), mode="valid")


def emit_plot_data(results_dir, window: int | None = None, horizon: int | None = None) -> list[Path]:
    """Write prediction, smoothed-error and learning-rate CSVs next to the traces."""
    results = Path(results_dir)
    runs = json.loads((results / "runs.json").read_text())
    manifest = json.loads((results / "manifest.json").read_text())
    if window is None:
        window = SMOOTHING.get(manifest.get("dataset"), 1)
    plot_dir = results / "plots"
    plot_dir.mkdir(exist_ok=True)
    groups: dict[str, list[dict]] = {}
    for r in runs:
        key = f"{r['dataset']}_{r['cell']}_b{r['b']}_seed{r['seed']}"
        groups.setdefault(key, []).append(r)
    written = []
    for key, members in sorted(groups.items()):
        traces = {r["run_id"]: read_trace(results / "traces" / f"{r['run_id']}.csv") for r in members}
        counts: dict[str, int] = {}
        for r in members:
            counts[r["method"]] = counts.get(r["method"], 0) + 1
        # GD runs differing only in k/eta share a group; label them apart
        label = {r["run_id"]: r["method"] if counts[r["method"]] == 1 else f"{r['method']}_k{r['k']}_eta{r['eta']}"
                 for r in members}
        first = next(iter(traces.values()))
        h = (horizon or first.horizon) - 1
        T = len(first)
        # (a) predictions at the displayed horizon; target time is t + h + 1
        path = plot_dir / f"predictions_{key}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            names = [label[r["run_id"]] for r in members]
            w.writerow(["timestamp_index", "target_time", "actual", *names])
            for k in range(T):
                w.writerow([int(first.t[k]), int(first.t[k]) + h + 1, repr(float(first.target[k, h, 0])),
                            *[repr(float(traces[r["run_id"]].pred[k, h, 0])) for r in members]])
        written.append(path)
        # (b) per-step RMSE across outputs, centred moving average
        path = plot_dir / f"errors_{key}.csv"
        curves = {}
        for r in members:
            tr = traces[r["run_id"]]
            raw = np.sqrt(tr.squared_error / tr.pred[0].size)
            curves[label[r["run_id"]]] = moving_average(raw, window)
        offset = (window - 1) // 2
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp_index", *curves])
            for k in range(T - window + 1):
                w.writerow([int(first.t[k + offset]), *[repr(float(c[k])) for c in curves.values()]])
        written.append(path)
        # (c) learning-rate curves of the adaptive methods
        pola = [r for r in members if Variant.parse(r["method"]).is_pola]
        if pola:
            path = plot_dir / f"learning_rates_{key}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["timestamp_index", *[label[r["run_id"]] for r in pola]])
                for k in range(T):
                    w.writerow([int(first.t[k]), *[repr(float(traces[r["run_id"]].gamma_t[k])) for r in pola]])
            written.append(path)
    return written


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))
