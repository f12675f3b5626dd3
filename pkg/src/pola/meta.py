"""Per-batch learning-rate factor estimation.

Both estimators take one trial SGD step on the older half of the update
batch and score it on the newer half.  ``fs_select`` searches a finite set
of absolute rates; ``gd_meta`` runs a few gradient steps on a sigmoid
reparameterisation ``beta = sigmoid(alpha)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .numerics import NonFiniteError, ParamVector, dot

DEFAULT_CANDIDATES = (1.0, 0.1, 0.01, 0.001, 0.0001, 0.0)
Q_GRID = (1, 3, 5, 7, 9)


@dataclass(frozen=True)
class CandidateSet:
    rates: tuple[float, ...] = DEFAULT_CANDIDATES

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if not rates:
            raise ValueError("candidate set is empty")
        if any(r < 0 or not math.isfinite(r) for r in rates):
            raise ValueError("candidate rates must be finite and >= 0")
        if len(set(rates)) != len(rates):
            raise ValueError("duplicate candidate rates")
        object.__setattr__(self, "rates", rates)

    def admissible(self, gamma: float) -> list[float]:
        """Candidates reachable as gamma*beta with beta in [0, 1], ascending."""
        return sorted(c for c in self.rates if c <= gamma)


@dataclass(frozen=True)
class GdMetaConfig:
    k: int = 3
    eta: float = 0.1

    def __post_init__(self):
        if int(self.k) < 1:
            raise ValueError("k must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be positive")


@dataclass
class MetaState:
    q: int = 1
    beta_history: list[float] = field(default_factory=list)
    alpha: float = 0.0

    def __post_init__(self):
        if int(self.q) < 1:
            raise ValueError("q must be >= 1")


def sigmoid(a: float) -> float:
    if a >= 0:
        return 1.0 / (1.0 + math.exp(-a))
    ea = math.exp(a)
    return ea / (1.0 + ea)


def fs_select(model, theta_t: ParamVector, train, val, gamma: float,
              candidates: CandidateSet = CandidateSet()) -> float:
    """Rate factor picked by exhaustive search over admissible candidates.

    Returns ``c* / gamma`` where ``c*`` minimises the validation loss after
    a trial step of size ``c`` along the training gradient.  Exact ties go
    to the smaller rate.
    """
    admissible = candidates.admissible(gamma)
    if not admissible:
        raise ValueError(f"no candidate rate <= gamma={gamma}")
    g_train = model.batch_grad(train, theta_t)
    best_c, best_loss = None, math.inf
    for c in admissible:  # ascending, so strict < keeps the smaller rate on ties
        trial = theta_t if c == 0.0 else theta_t.with_data(theta_t.data - c * g_train.data)
        loss = model.batch_loss(val, trial)
        if not math.isfinite(loss):
            continue
        if best_c is None or loss < best_loss:
            best_c, best_loss = c, loss
    if best_c is None:
        raise NonFiniteError("every candidate rate gave a non-finite validation loss")
    return 0.0 if gamma == 0.0 else min(best_c / gamma, 1.0)


def alpha_gradient(model, theta_t: ParamVector, g_train: ParamVector, val, gamma: float,
                   alpha: float) -> float:
    """d/dalpha of the validation loss at ``theta_t - gamma*sigmoid(alpha)*g_train``."""
    s = sigmoid(alpha)
    trial = theta_t.with_data(theta_t.data - gamma * s * g_train.data)
    g_val = model.batch_grad(val, trial)
    return -gamma * s * (1.0 - s) * dot(g_train, g_val)


def gd_meta(model, theta_t: ParamVector, train, val, gamma: float,
            cfg: GdMetaConfig = GdMetaConfig(), alpha_in: float = 0.0) -> tuple[float, float]:
    """Run ``cfg.k`` gradient steps on alpha; return ``(sigmoid(alpha), alpha)``."""
    g_train = model.batch_grad(train, theta_t)
    alpha = float(alpha_in)
    for _ in range(cfg.k):
        d_alpha = alpha_gradient(model, theta_t, g_train, val, gamma, alpha)
        alpha = alpha - cfg.eta * d_alpha
        if not math.isfinite(alpha):
            raise NonFiniteError("meta update produced a non-finite alpha")
    return sigmoid(alpha), alpha


def smooth_beta(state: MetaState, beta_v: float) -> float:
    """Append ``beta_v`` to the history and return the mean of the last q entries."""
    if not 0.0 <= beta_v <= 1.0:
        raise ValueError(f"beta={beta_v} outside [0, 1]")
    state.beta_history.append(float(beta_v))
    window = state.beta_history[-state.q:]
    # fsum keeps q=1 exact and the mean inside [min, max] of the window
    return min(max(math.fsum(window) / len(window), min(window)), max(window))


__all__ = [
    "CandidateSet", "GdMetaConfig", "MetaState", "DEFAULT_CANDIDATES", "Q_GRID",
    "sigmoid", "fs_select", "gd_meta", "alpha_gradient", "smooth_beta",
]
