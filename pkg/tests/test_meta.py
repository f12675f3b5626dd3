import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pola.meta import (CandidateSet, GdMetaConfig, MetaState, alpha_gradient, fs_select, gd_meta, sigmoid,
                       smooth_beta)
from pola.numerics import ParamVector


class ToyModel:
    """Scalar model whose 'batches' are the tags 'train' and 'val'."""

    def __init__(self, train_grad, val_loss, val_grad):
        self.train_grad, self.val_loss, self.val_grad = train_grad, val_loss, val_grad

    def batch_grad(self, batch, params):
        f = self.train_grad if batch == "train" else self.val_grad
        return params.with_data(np.array([f(params.data[0])]))

    def batch_loss(self, batch, params):
        assert batch == "val"
        return self.val_loss(params.data[0])


def scalar(v):
    return ParamVector.from_shapes([("theta", (1,))], np.array([float(v)]))


def quad_val(target):
    return ToyModel(lambda th: 1.0, lambda th: (th - target) ** 2, lambda th: 2 * (th - target))


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(2.0) == pytest.approx(0.8807970779778823, abs=1e-12)
    assert sigmoid(-800.0) == 0.0 and sigmoid(800.0) == 1.0


@given(st.floats(-50, 50))
def test_sigmoid_symmetry(a):
    assert sigmoid(a) + sigmoid(-a) == pytest.approx(1.0, abs=1e-15)


def test_fs_picks_best_candidate():
    # theta=1, g=1: trial at c=0.1 lands exactly on the validation minimum 0.9
    assert fs_select(quad_val(0.9), scalar(1.0), "train", "val", 1.0) == pytest.approx(0.1)


def test_fs_scales_by_gamma_and_respects_admissibility():
    beta = fs_select(quad_val(0.9), scalar(1.0), "train", "val", 0.1)
    assert beta == pytest.approx(1.0)
    # optimum c=0.1 is not admissible under gamma=0.01, so the largest admissible rate wins
    assert fs_select(quad_val(0.9), scalar(1.0), "train", "val", 0.01) == pytest.approx(1.0)
    assert fs_select(quad_val(1.0), scalar(1.0), "train", "val", 0.1) == 0.0


def test_fs_ties_go_to_the_smaller_rate():
    flat = ToyModel(lambda th: 1.0, lambda th: 3.0, lambda th: 0.0)
    assert fs_select(flat, scalar(1.0), "train", "val", 1.0) == 0.0
    sym = ToyModel(lambda th: 1.0, lambda th: abs(th - 0.45), lambda th: 0.0)
    # c=0.1 and c=1.0 land at 0.9 and 0.0 with losses 0.45 each
    cs = CandidateSet((1.0, 0.1))
    assert fs_select(sym, scalar(1.0), "train", "val", 1.0, cs) == pytest.approx(0.1)


def test_fs_gamma_zero_returns_zero():
    assert fs_select(quad_val(0.9), scalar(1.0), "train", "val", 0.0) == 0.0


def test_candidate_set_validation():
    with pytest.raises(ValueError):
        CandidateSet(())
    with pytest.raises(ValueError):
        CandidateSet((0.1, -1.0))
    with pytest.raises(ValueError):
        CandidateSet((0.1, 0.1))
    assert CandidateSet().admissible(0.01) == [0.0, 0.0001, 0.001, 0.01]
    with pytest.raises(ValueError):
        fs_select(quad_val(0.9), scalar(1.0), "train", "val", 0.05, CandidateSet((0.1, 1.0)))


def quadratic_gd_model():
    # L_T(theta) = 2 theta, L_V(theta) = theta^2
    return ToyModel(lambda th: 2.0, lambda th: th * th, lambda th: 2 * th)


def test_gd_single_step_example():
    beta, alpha = gd_meta(quadratic_gd_model(), scalar(1.0), "train", "val", 0.1, GdMetaConfig(k=1, eta=0.1))
    # trial theta 0.9, dL/dalpha = -0.1*0.25*2*1.8 = -0.09
    assert alpha == pytest.approx(0.009, abs=1e-15)
    assert beta == pytest.approx(1 / (1 + math.exp(-0.009)), abs=1e-15)
    assert beta == pytest.approx(0.50225, abs=1e-5)


def test_gd_k_steps_and_warm_start():
    model, th = quadratic_gd_model(), scalar(1.0)
    a = 0.0
    for _ in range(3):
        s = sigmoid(a)
        trial = 1.0 - 0.1 * s * 2.0
        a -= 0.1 * (-0.1 * s * (1 - s) * 2.0 * 2 * trial)
    beta, alpha = gd_meta(model, th, "train", "val", 0.1, GdMetaConfig(k=3, eta=0.1))
    assert alpha == pytest.approx(a, rel=1e-13)
    _, warm = gd_meta(model, th, "train", "val", 0.1, GdMetaConfig(k=1, eta=0.1), alpha_in=alpha)
    assert warm > alpha


def test_alpha_gradient_matches_finite_difference():
    model = quadratic_gd_model()

    def val_loss(a):
        return (1.0 - 0.5 * sigmoid(a) * 2.0) ** 2

    for a in (-2.0, 0.0, 0.7):
        fd = (val_loss(a + 1e-6) - val_loss(a - 1e-6)) / 2e-6
        assert alpha_gradient(model, scalar(1.0), scalar(2.0), "val", 0.5, a) == pytest.approx(fd, rel=1e-7)


def test_gd_config_validation():
    with pytest.raises(ValueError):
        GdMetaConfig(k=0)
    with pytest.raises(ValueError):
        GdMetaConfig(eta=0.0)


def test_smooth_beta_examples():
    st_ = MetaState(q=1)
    assert smooth_beta(st_, 0.3) == 0.3
    st_ = MetaState(q=3, beta_history=[0.1, 0.2])
    assert smooth_beta(st_, 0.6) == pytest.approx(0.3)
    st_ = MetaState(q=3, beta_history=[0.5])
    assert smooth_beta(st_, 0.7) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        smooth_beta(MetaState(), 1.2)
    with pytest.raises(ValueError):
        MetaState(q=0)


@given(st.integers(1, 9), st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_smooth_beta_stays_within_window_range(q, betas):
    state = MetaState(q=q)
    for i, b in enumerate(betas):
        out = smooth_beta(state, b)
        window = betas[max(0, i + 1 - q):i + 1]
        assert min(window) <= out <= max(window)
        assert 0.0 <= out <= 1.0
