import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pola.numerics import (NonFiniteError, ParamVector, axpy, check_finite, dot, finite_difference_grad,
                           matvec, relative_error)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def pv(values):
    return ParamVector.from_shapes([("a", (len(values),))], np.asarray(values, dtype=float))


def test_matvec_identity_zero_and_hand_case():
    np.testing.assert_array_equal(matvec(np.eye(2), [3, 4]), [3, 4])
    np.testing.assert_array_equal(matvec(np.zeros((2, 2)), [3, 4]), [0, 0])
    np.testing.assert_array_equal(matvec([[1, 2], [3, 4]], [1, 1]), [3, 7])


def test_matvec_dimension_mismatch():
    with pytest.raises(ValueError):
        matvec(np.eye(2), [1, 2, 3])


def test_check_finite_rejects_nan():
    with pytest.raises(NonFiniteError):
        check_finite([1.0, np.nan])


def test_dot_examples():
    assert dot(pv([0, 0, 0]), pv([0, 0, 0])) == 0
    assert dot(pv([1, 2]), pv([3, 4])) == 11
    a = pv([1.5, -2.0, 3.0])
    assert dot(a, a) == pytest.approx(1.5**2 + 4 + 9)


def test_axpy_examples():
    y = pv([1, 2])
    assert axpy(y, 0.0, pv([5, 5])) == y
    np.testing.assert_allclose(axpy(y, -0.05, pv([2, -4])).data, [0.9, 2.2], rtol=0, atol=1e-15)
    assert np.all(axpy(y, -1.0, y).data == 0)


def test_layout_mismatch_raises():
    a = pv([1, 2])
    b = ParamVector.from_shapes([("b", (2,))], np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        dot(a, b)
    with pytest.raises(ValueError):
        axpy(a, 1.0, b)


def test_layout_must_be_contiguous():
    with pytest.raises(ValueError):
        ParamVector(np.zeros(4), [("a", 0, (2,)), ("b", 3, (1,))])
    with pytest.raises(ValueError):
        ParamVector(np.zeros(4), [("a", 0, (2,))])


def test_named_views_write_through():
    p = ParamVector.from_shapes([("w", (2, 3)), ("b", (3,))])
    p["w"][1, 2] = 7.0
    p["b"][0] = -1.0
    assert p.data[5] == 7.0 and p.data[6] == -1.0
    assert p.names() == ["w", "b"]


def test_fd_grad_of_squared_norm():
    g = finite_difference_grad(lambda p: float(np.sum(p.data**2)), pv([1, -2]), 1e-5)
    np.testing.assert_allclose(g.data, [2, -4], rtol=0, atol=1e-8)


def test_fd_grad_of_constant_and_product():
    g = finite_difference_grad(lambda p: 3.0, pv([1, 2, 3]), 1e-5)
    assert np.all(g.data == 0)
    g = finite_difference_grad(lambda p: p.data[0] * p.data[1], pv([3, 5]), 1e-5)
    np.testing.assert_allclose(g.data, [5, 3], rtol=1e-9)


def test_fd_grad_rejects_bad_eps_and_nonfinite():
    with pytest.raises(ValueError):
        finite_difference_grad(lambda p: 0.0, pv([1.0]), 0.0)
    with pytest.raises(NonFiniteError):
        finite_difference_grad(lambda p: np.inf, pv([1.0]), 1e-5)


vec_pairs = st.integers(1, 12).flatmap(
    lambda n: st.tuples(arrays(np.float64, n, elements=finite), arrays(np.float64, n, elements=finite)))


@given(vec_pairs)
def test_dot_symmetric(pair):
    a, b = pv(pair[0]), pv(pair[1])
    assert dot(a, b) == dot(b, a)


@given(vec_pairs, st.floats(-10, 10, allow_nan=False))
def test_axpy_round_trip(pair, alpha):
    y, x = pv(pair[0]), pv(pair[1])
    back = axpy(axpy(y, alpha, x), -alpha, x)
    np.testing.assert_allclose(back.data, y.data, rtol=0, atol=1e-12 * max(1.0, np.abs(alpha * x.data).max()))


@settings(max_examples=40)
@given(arrays(np.float64, 3, elements=st.floats(-2, 2)), arrays(np.float64, 3, elements=st.floats(-2, 2)))
def test_fd_matches_polynomial_gradients(p0, c):
    # f = sum c_i p_i^3 + p0 p1 p2 ; analytic gradient below
    def f(p):
        x = p.data
        return float(np.sum(c * x**3) + x[0] * x[1] * x[2])

    x = p0
    analytic = 3 * c * x**2 + np.array([x[1] * x[2], x[0] * x[2], x[0] * x[1]])
    g = finite_difference_grad(f, pv(x), 1e-5)
    # central differences carry an eps^2 truncation term on cubics
    assert np.all(np.abs(g.data - analytic) <= 1e-6 * np.maximum(1.0, np.abs(analytic)))


def test_relative_error_floor():
    assert relative_error(np.array([1.0]), np.array([1.0]))[0] == 0
    assert relative_error(np.array([2.0]), np.array([1.0]))[0] == pytest.approx(0.5)
    assert relative_error(np.array([1e-12]), np.array([0.0]), floor=1e-8)[0] == pytest.approx(1e-4)


def test_fd_fourth_order_is_exact_on_quartics():
    f = lambda p: float(p.data[0] ** 4 - 3 * p.data[0] ** 3 + p.data[1] ** 2)
    g = finite_difference_grad(f, pv([1.5, -2.0]), 1e-2, order=4)
    np.testing.assert_allclose(g.data, [4 * 1.5**3 - 9 * 1.5**2, -4.0], rtol=1e-10)
    with pytest.raises(ValueError):
        finite_difference_grad(f, pv([1.0, 1.0]), 1e-3, order=3)
