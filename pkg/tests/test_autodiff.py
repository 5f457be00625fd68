"""Gradient engine: primitive correctness, tape contracts, finite checks."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tierfl.autodiff import (
    Tape,
    Tensor,
    add,
    add_bias,
    gradient_check,
    matmul,
    mean_all,
    mul,
    relu,
    reshape,
    scale,
    slice_1d,
    sub,
    sum_all,
)
from tierfl.errors import ContractError, DimensionError, NumericError

finite = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False, allow_infinity=False)
# Keeps finite differences away from the relu kink.
off_kink = st.floats(min_value=0.05, max_value=3.0).flatmap(
    lambda v: st.sampled_from([v, -v])
)


def small_matrix(rows, cols, elements=finite):
    return arrays(np.float64, (rows, cols), elements=elements)


def test_matmul_value():
    a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    b = Tensor(np.array([[0.0], [1.0]]))
    with Tape():
        out = matmul(a, b)
    assert np.array_equal(out.data, np.array([[2.0], [4.0]]))


def test_square_sum_gradient():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with Tape() as tape:
        loss = sum_all(mul(w, w))
        tape.backward(loss)
    assert np.array_equal(w.grad, np.array([2.0, 4.0]))


def test_backward_rejects_nonscalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = mul(x, x)
        with pytest.raises(ContractError):
            tape.backward(y)


def test_backward_rejects_empty_tape():
    with pytest.raises(ContractError):
        Tape().backward(Tensor(1.0))


def test_backward_clears_tape_and_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    tape = Tape()
    with tape:
        loss = sum_all(mul(x, x))
    tape.backward(loss)
    first = x.grad.copy()
    with tape:
        loss2 = sum_all(mul(x, x))
    tape.backward(loss2)
    assert np.array_equal(x.grad, 2 * first), "second pass should accumulate"


def test_relu_subgradient_zero_at_kink():
    x = Tensor(np.array([0.0, -1.0, 1.0]), requires_grad=True)
    with Tape() as tape:
        tape.backward(sum_all(relu(x)))
    assert np.array_equal(x.grad, np.array([0.0, 0.0, 1.0]))


def test_matmul_shape_error():
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_nonfinite_construction_rejected():
    with pytest.raises(NumericError):
        Tensor(np.array([1.0, np.inf]))


def test_overflow_in_op_rejected():
    x = Tensor(np.array([1e308]))
    with Tape(), np.errstate(over="ignore"):
        with pytest.raises(NumericError):
            scale(scale(x, 10.0), 10.0)


def test_slice_scatter_gradient():
    x = Tensor(np.arange(6.0), requires_grad=True)
    with Tape() as tape:
        tape.backward(sum_all(slice_1d(x, 2, 3)))
    assert np.array_equal(x.grad, np.array([0.0, 0.0, 1.0, 1.0, 1.0, 0.0]))


def test_reshape_round_trip_gradient():
    x = Tensor(np.arange(6.0), requires_grad=True)
    with Tape() as tape:
        m = reshape(x, (2, 3))
        tape.backward(sum_all(mul(m, m)))
    assert np.array_equal(x.grad, 2 * np.arange(6.0))


def test_nested_tapes_do_not_interleave():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    outer = Tape()
    with outer:
        y = mul(x, x)
        inner = Tape()
        with inner:
            z = sum_all(mul(x, x))
        inner.backward(z)
        inner_grad = x.grad.copy()
        loss = sum_all(y)
    outer.backward(loss)
    assert np.array_equal(x.grad, 2 * inner_grad)


def test_detached_leaf_gets_no_gradient():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    c = Tensor(np.array([3.0, 4.0]))
    with Tape() as tape:
        tape.backward(sum_all(mul(x, c)))
    assert np.array_equal(x.grad, c.data)
    assert c.grad is None


@given(small_matrix(3, 4), small_matrix(4, 2))
@settings(max_examples=25, deadline=None)
def test_matmul_matches_finite_differences(a, b):
    bt = Tensor(b)
    err = gradient_check(lambda t: mean_all(matmul(t, bt)), Tensor(a, requires_grad=True))
    assert err < 1e-6


@given(small_matrix(2, 3, off_kink), small_matrix(2, 3, off_kink))
@settings(max_examples=25, deadline=None)
def test_elementwise_chain_matches_finite_differences(a, b):
    bt = Tensor(b)

    def f(t):
        return mean_all(relu(add(mul(t, bt), sub(t, bt))))

    err = gradient_check(f, Tensor(a, requires_grad=True))
    assert err < 1e-6


@given(small_matrix(3, 4), arrays(np.float64, 4, elements=finite))
@settings(max_examples=25, deadline=None)
def test_add_bias_matches_finite_differences(x, bias):
    xt = Tensor(x)
    err = gradient_check(lambda t: mean_all(add_bias(matmul(xt, Tensor(np.ones((4, 4)))), t)),
                         Tensor(bias, requires_grad=True))
    assert err < 1e-6


@given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=6))
@settings(max_examples=20, deadline=None)
def test_mean_is_scaled_sum(rows, cols):
    rng = np.random.default_rng(rows * 7 + cols)
    x = Tensor(rng.normal(size=(rows, cols)))
    with Tape():
        assert mean_all(x).item() == pytest.approx(sum_all(x).item() / (rows * cols), rel=1e-12)
