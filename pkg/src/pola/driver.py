"""Prequential online loop, offline pre-training and hyperparameter tuning.

Stream time ``t`` is 1-based: the sample ``s_t`` has inputs ending at
``z_t`` and targets ``z_{t+1..t+n}``, so it becomes usable for training at
time ``t + n``.  At every online step the model first predicts, then
counts the newly completed sample and, once ``b`` fresh samples have
accumulated, updates on the batch ``{t-n-b+1, ..., t-n}``.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .meta import CandidateSet, GdMetaConfig, MetaState, Q_GRID, fs_select, gd_meta, smooth_beta
from .models import CellKind, MeanReduced, ModelConfig, RecurrentModel
from .numerics import NonFiniteError, ParamVector
from .optimizers import RmspropState, rmsprop_step, sgd_step
from .windowing import Series, Windows, batch_indices

log = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    FROZEN = "pretrained"
    SGD = "online-sgd"
    RMSPROP = "online-rmsprop"
    POLA_FS = "pola-fs"
    POLA_GD = "pola-gd"

    @property
    def is_pola(self) -> bool:
        return self in (Variant.POLA_FS, Variant.POLA_GD)

    @property
    def updates(self) -> bool:
        return self is not Variant.FROZEN

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"frozen": "pretrained", "sgd": "online-sgd", "rmsprop": "online-rmsprop",
                   "fs": "pola-fs", "gd": "pola-gd"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class MethodSpec:
    """One online method; ``gamma``/``q`` left as None are tuned."""

    variant: Variant
    gamma: float | None = None
    q: int | None = None
    candidates: CandidateSet = CandidateSet()
    gd: GdMetaConfig = GdMetaConfig()
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8
    reduction: str = "mean"

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.reduction not in ("mean", "sum"):
            raise ValueError("reduction must be 'mean' or 'sum'")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.q is not None and int(self.q) < 1:
            raise ValueError("q must be >= 1")

    @property
    def name(self) -> str:
        return self.variant.value


@dataclass(frozen=True)
class PretrainConfig:
    num_samples: int = 700
    epochs: int = 500
    lr: float = 0.1
    batch_size: int = 32


@dataclass
class DriverState:
    model: RecurrentModel
    S: int = 0
    meta: MetaState = field(default_factory=MetaState)
    rmsprop: RmspropState | None = None
    t: int = 0


@dataclass
class RunTrace:
    """Per-step record of an online run, predictions in original units."""

    t: np.ndarray            # (T,) stream time of each prediction
    pred: np.ndarray         # (T, n, d)
    target: np.ndarray       # (T, n, d)
    gamma_t: np.ndarray      # (T,) effective rate in force after the step
    beta_v: np.ndarray       # (T,) meta-stage beta, NaN when no meta-stage ran
    updates: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)
    horizon: int = 1
    final_params: ParamVector | None = None

    def __len__(self) -> int:
        return self.t.size

    @property
    def squared_error(self) -> np.ndarray:
        r = self.pred - self.target
        return np.sum(r * r, axis=(1, 2))


# -- pre-training -----------------------------------------------------------

def pretrain(model: RecurrentModel, windows: Windows, cfg: PretrainConfig = PretrainConfig(),
             seed: int = 0, num_samples: int | None = None,
             history: list[float] | None = None) -> RecurrentModel:
    """Offline mini-batch SGD on the first ``num_samples`` samples.

    Minimises mean squared error per output entry. If ``history`` is given
    the full-set mean loss after every epoch is appended to it.
    """
    count = cfg.num_samples if num_samples is None else num_samples
    if count > len(windows):
        raise ValueError(f"need {count} pre-training samples, series yields {len(windows)}")
    data = windows.span(windows.first_t, windows.first_t + count - 1)
    rng = np.random.default_rng(seed)
    params = model.params
    scale = 1.0 / (model.config.output_dim)
    for _ in range(cfg.epochs):
        order = rng.permutation(count)
        for lo in range(0, count, cfg.batch_size):
            sel = order[lo:lo + cfg.batch_size]
            sub = type(data)(data.x[sel], data.y[sel], data.t[sel])
            _, grad = model.loss_and_grad(sub, params)
            params = params.with_data(params.data - (cfg.lr * scale / sel.size) * grad.data)
        if not np.all(np.isfinite(params.data)):
            raise NonFiniteError("pre-training diverged")
        if history is not None:
            history.append(model.batch_loss(data, params) * scale / count)
    return model.with_params(params)


# -- the online loop ----------------------------------------------------------

def run_online(method: MethodSpec, model: RecurrentModel, windows: Windows, series: Series,
               t_start: int, t_end: int | None = None, b: int = 10,
               events: list | None = None) -> RunTrace:
    """Predict-then-update over stream times ``t_start..t_end``.

    ``method.gamma`` and (for POLA) ``method.q`` must be resolved.  If
    ``events`` is a list, ("predict", t, digest) and ("update", t, indices) tuples
    are appended in execution order; predict events carry a digest of the
    parameters used.
    """
    if b < 2:
        raise ValueError("online batch size b must be > 1")
    variant = method.variant
    gamma = 0.0 if method.gamma is None and variant is Variant.FROZEN else method.gamma
    if gamma is None:
        raise ValueError(f"{method.name}: gamma not resolved")
    q = method.q if method.q is not None else 1
    t_end = windows.last_t if t_end is None else t_end
    if not windows.first_t <= t_start <= t_end <= windows.last_t:
        raise ValueError(f"online range {t_start}..{t_end} outside samples {windows.first_t}..{windows.last_t}")
    m, n = windows.m, windows.n
    d = windows.values.shape[1]

    state = DriverState(model=model, meta=MetaState(q=q), t=t_start)
    if variant is Variant.RMSPROP:
        state.rmsprop = RmspropState.zeros_like(model.params, method.rms_decay, method.rms_epsilon)

    T = t_end - t_start + 1
    preds = np.empty((T, n * d))
    gamma_t = np.empty(T)
    beta_v = np.full(T, np.nan)
    updates: list[tuple[int, tuple[int, ...]]] = []
    params = model.params
    objective = model if method.reduction == "sum" else MeanReduced(model)
    rate = gamma if variant in (Variant.SGD, Variant.RMSPROP) else 0.0

    for k, t in enumerate(range(t_start, t_end + 1)):
        state.t = t
        preds[k] = model.predict(windows.x_all[t - m], params)
        if events is not None:
            events.append(("predict", t, hashlib.sha1(params.data.tobytes()).hexdigest()))
        if variant.updates:
            state.S = min(state.S + 1, b)
        if variant.updates and state.S == b:
            idx = batch_indices(t, n, b, m)
            batch = windows.batch(idx.all)
            if events is not None:
                events.append(("update", t, idx.all))
            updates.append((t, idx.all))
            if variant is Variant.SGD:
                params = sgd_step(params, objective.batch_grad(batch, params), gamma, 1.0)
                state.S = 0
            elif variant is Variant.RMSPROP:
                params, state.rmsprop = rmsprop_step(params, objective.batch_grad(batch, params), state.rmsprop, gamma)
                state.S = 0
            else:
                train, val = windows.batch(idx.train), windows.batch(idx.val)
                if gamma == 0.0:
                    bv = 0.0
                elif variant is Variant.POLA_FS:
                    bv = fs_select(objective, params, train, val, gamma, method.candidates)
                else:
                    bv, state.meta.alpha = gd_meta(objective, params, train, val, gamma, method.gd, state.meta.alpha)
                beta = smooth_beta(state.meta, bv)
                beta_v[k] = bv
                params = sgd_step(params, objective.batch_grad(batch, params), gamma, beta)
                rate = gamma * beta
                if beta > 0.0:
                    state.S = 0
        gamma_t[k] = rate

    state.model = model.with_params(params)
    ts = np.arange(t_start, t_end + 1)
    target = windows.y_all[ts - m]
    return RunTrace(
        t=ts,
        pred=series.destandardize(preds.reshape(T, n, d)),
        target=series.destandardize(target),
        gamma_t=gamma_t,
        beta_v=beta_v,
        updates=updates,
        horizon=n,
        final_params=params,
    )


# -- evaluation -----------------------------------------------------------------

def evaluate(trace: RunTrace, series: Series) -> float:
    """Normalised RMSE: per-dimension RMSE over all steps and horizons, divided
    by the full-series standard deviation, averaged across dimensions."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    r = trace.pred - trace.target
    per_dim = np.sqrt(np.mean(r * r, axis=(0, 1))) / series.per_dim_std
    return float(np.mean(per_dim))


def audit_causality(events: list, horizon: int) -> list[str]:
    """Return a description of every prequential-ordering violation in an event log."""
    problems = []
    predicted = set()
    for ev in events:
        if ev[0] == "predict":
            predicted.add(ev[1])
        else:
            _, t, idx = ev
            if t not in predicted:
                problems.append(f"update at t={t} before its prediction")
            late = [i for i in idx if i > t - horizon]
            if late:
                problems.append(f"update at t={t} uses unobserved samples {late}")
    return problems


# -- tuning ---------------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    """Chronological layout of the pre-training samples and the online phase."""

    first_t: int
    n_pretrain: int
    n_warm: int
    last_t: int

    @classmethod
    def build(cls, windows: Windows, n_pretrain: int) -> "Split":
        if n_pretrain < 3:
            raise ValueError("need at least 3 pre-training samples")
        if n_pretrain >= len(windows):
            raise ValueError(f"series yields {len(windows)} samples; need more than {n_pretrain}")
        return cls(windows.first_t, n_pretrain, (2 * n_pretrain) // 3, windows.last_t)

    @property
    def val_start(self) -> int:
        return self.first_t + self.n_warm

    @property
    def val_end(self) -> int:
        return self.first_t + self.n_pretrain - 1

    @property
    def online_start(self) -> int:
        return self.first_t + self.n_pretrain


def _score(method: MethodSpec, warm: RecurrentModel, windows: Windows, series: Series,
           split: Split, b: int) -> float:
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            trace = run_online(method, warm, windows, series, split.val_start, split.val_end, b)
            score = evaluate(trace, series)
    except NonFiniteError:
        return math.inf
    return score if math.isfinite(score) else math.inf


def _argmin_smallest(scores: dict) -> object:
    # ties go to the smallest key
    best = min(scores.values())
    return min(k for k, v in scores.items() if v == best)


def tune_gamma(method: MethodSpec, warm: RecurrentModel, windows: Windows, series: Series,
               split: Split, b: int = 10, candidates: CandidateSet | None = None) -> tuple[float, dict]:
    """Pick gamma by simulating the online loop over the validation third."""
    rates = (candidates or method.candidates).rates
    if len(rates) == 1:
        return rates[0], {rates[0]: math.nan}
    q = method.q if method.q is not None else 1
    scores = {g: _score(replace(method, gamma=g, q=q), warm, windows, series, split, b) for g in rates}
    return _argmin_smallest(scores), scores


def tune_q(method: MethodSpec, warm: RecurrentModel, windows: Windows, series: Series,
           split: Split, b: int = 10, q_grid=Q_GRID) -> tuple[int, dict]:
    if not method.variant.is_pola:
        raise ValueError("q is tuned for POLA variants only")
    if method.gamma is None:
        raise ValueError("tune gamma before q")
    q_grid = tuple(q_grid)
    if len(q_grid) == 1:
        return q_grid[0], {q_grid[0]: math.nan}
    scores = {q: _score(replace(method, q=q), warm, windows, series, split, b) for q in q_grid}
    return _argmin_smallest(scores), scores


# -- one (cell, seed) pipeline --------------------------------------------------

@dataclass
class Prepared:
    """Models shared by every method of one (cell, seed) run."""

    windows: Windows
    series: Series
    split: Split
    pretrained: RecurrentModel
    warm: RecurrentModel | None = None
    pretrain_history: list[float] = field(default_factory=list)


def prepare(series: Series, window_len: int, horizon: int, cell, seed: int,
            cfg: PretrainConfig = PretrainConfig(), hidden_units: int = 10,
            need_warm: bool = True) -> Prepared:
    windows = Windows(series.standardized_values(), window_len, horizon)
    split = Split.build(windows, cfg.num_samples)
    mcfg = ModelConfig(CellKind.parse(cell), series.dims, window_len, horizon, hidden_units)
    init = RecurrentModel.init(mcfg, seed)
    hist: list[float] = []
    full = pretrain(init, windows, cfg, seed=_subseed(seed, 1), history=hist)
    warm = None
    if need_warm:
        warm = pretrain(init, windows, cfg, seed=_subseed(seed, 2), num_samples=split.n_warm)
    return Prepared(windows, series, split, full, warm, hist)


def _subseed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def resolve_method(method: MethodSpec, prep: Prepared, b: int, tuning: dict | None = None) -> MethodSpec:
    """Fill in gamma (and q for POLA) by tuning on the pre-training split."""
    if method.variant is Variant.FROZEN:
        return replace(method, gamma=0.0)
    if method.gamma is None or (method.variant.is_pola and method.q is None):
        if prep.warm is None:
            raise ValueError("tuning needs the warm-up model")
    if method.gamma is None:
        gamma, scores = tune_gamma(method, prep.warm, prep.windows, prep.series, prep.split, b)
        method = replace(method, gamma=gamma)
        if tuning is not None:
            tuning["gamma_scores"] = {repr(k): v for k, v in scores.items()}
    if method.variant.is_pola and method.q is None:
        q, scores = tune_q(method, prep.warm, prep.windows, prep.series, prep.split, b)
        method = replace(method, q=q)
        if tuning is not None:
            tuning["q_scores"] = {str(k): v for k, v in scores.items()}
    return method


def run_method(method: MethodSpec, prep: Prepared, b: int = 10, events: list | None = None,
               tuning: dict | None = None) -> tuple[RunTrace, MethodSpec]:
    resolved = resolve_method(method, prep, b, tuning)
    log.debug("running %s gamma=%s q=%s", resolved.name, resolved.gamma, resolved.q)
    trace = run_online(resolved, prep.pretrained, prep.windows, prep.series,
                       prep.split.online_start, None, b, events)
    return trace, resolved

