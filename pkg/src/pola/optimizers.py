"""Update rules: rate-scaled SGD and the RMSprop baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import NonFiniteError, ParamVector


def sgd_step(theta: ParamVector, grad: ParamVector, gamma: float, beta: float) -> ParamVector:
    """``theta - gamma * beta * grad``; the effective rate gamma*beta never exceeds gamma."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta={beta} outside [0, 1]")
    if not theta.same_layout(grad):
        raise ValueError("ParamVector layout mismatch")
    if beta == 0.0 or gamma == 0.0:
        return theta
    with np.errstate(over="ignore", invalid="ignore"):
        new = theta.data - (gamma * beta) * grad.data
    if not np.all(np.isfinite(new)):
        raise NonFiniteError("SGD step produced non-finite parameters")
    return theta.with_data(new)


@dataclass(frozen=True)
class RmspropState:
    sq_avg: ParamVector
    decay: float = 0.9
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ParamVector, decay: float = 0.9, epsilon: float = 1e-8) -> "RmspropState":
        if not 0.0 < decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        return cls(params.zeros_like(), decay, epsilon)


def rmsprop_step(theta: ParamVector, grad: ParamVector, state: RmspropState,
                 gamma: float) -> tuple[ParamVector, RmspropState]:
    if not (theta.same_layout(grad) and theta.same_layout(state.sq_avg)):
        raise ValueError("ParamVector layout mismatch")
    g = grad.data
    with np.errstate(over="ignore", invalid="ignore"):
        sq = state.decay * state.sq_avg.data + (1.0 - state.decay) * (g * g)
        new = theta.data - gamma * g / (np.sqrt(sq) + state.epsilon)
    if not np.all(np.isfinite(new)):
        raise NonFiniteError("RMSprop step produced non-finite parameters")
    return theta.with_data(new), RmspropState(state.sq_avg.with_data(sq), state.decay, state.epsilon)
