"""Optimizer update rules."""
import numpy as np
import pytest

from tierfl.errors import ContractError
from tierfl.optim import Adam, Sgd


def test_sgd_step_oracle():
    opt = Sgd(lr=0.5)
    out = opt.step(np.array([1.0, 2.0]), np.array([2.0, -2.0]))
    assert np.array_equal(out, np.array([0.0, 3.0]))


def test_sgd_does_not_mutate_inputs():
    flat = np.array([1.0, 2.0])
    Sgd(lr=0.1).step(flat, np.array([1.0, 1.0]))
    assert np.array_equal(flat, np.array([1.0, 2.0]))


def test_adam_first_step_moves_by_lr_sign():
    opt = Adam(lr=0.1, eps=1e-12)
    grad = np.array([3.0, -0.5, 0.0])
    out = opt.step(np.zeros(3), grad)
    # Bias-corrected first step is lr * g / (|g| + eps) = lr * sign(g).
    assert np.allclose(out, -0.1 * np.sign(grad), atol=1e-9)


def test_adam_state_advances():
    opt = Adam(lr=0.1)
    w = np.zeros(2)
    g = np.array([1.0, 1.0])
    first = opt.step(w, g)
    second = opt.step(first, g)
    assert opt.t == 2
    assert not np.array_equal(second - first, first - w), "moments must shape later steps"


def test_adam_rejects_shape_drift():
    opt = Adam(lr=0.1)
    opt.step(np.zeros(3), np.ones(3))
    with pytest.raises(ContractError):
        opt.step(np.zeros(4), np.ones(4))


def test_step_shape_mismatch_rejected():
    with pytest.raises(ContractError):
        Sgd(lr=0.1).step(np.zeros(3), np.ones(2))
