"""Optimizer and learning-rate schedule tests."""

import numpy as np
import pytest

from neuralwalker.autodiff import Tensor
from neuralwalker.errors import BadSchedule
from neuralwalker.optim import AdamW, warmup_cosine_lr


# -----------------------------------------------------------------------------
# Schedule
# -----------------------------------------------------------------------------

def test_schedule_endpoints():
    base = 0.5
    assert warmup_cosine_lr(0, 100, 10, base) == 0.0
    assert warmup_cosine_lr(10, 100, 10, base) == base
    assert warmup_cosine_lr(100, 100, 10, base) == pytest.approx(0.0, abs=1e-15)
    # Midpoint of the cosine span sits at half the base rate.
    assert warmup_cosine_lr(55, 100, 10, base) == pytest.approx(base / 2)


def test_schedule_monotone_ramp_then_decay():
    vals = [warmup_cosine_lr(s, 50, 5, 1.0) for s in range(51)]
    assert all(a < b for a, b in zip(vals[:5], vals[1:6]))
    assert all(a >= b for a, b in zip(vals[5:50], vals[6:51]))


def test_schedule_no_warmup():
    assert warmup_cosine_lr(0, 10, 0, 2.0) == 2.0


def test_schedule_rejects_bad_spans():
    with pytest.raises(BadSchedule):
        warmup_cosine_lr(0, 0, 0, 1.0)
    with pytest.raises(BadSchedule):
        warmup_cosine_lr(0, 10, 11, 1.0)
    with pytest.raises(BadSchedule):
        warmup_cosine_lr(0, 10, -1, 1.0)


# -----------------------------------------------------------------------------
# AdamW
# -----------------------------------------------------------------------------

def test_first_step_moves_by_lr_against_gradient_sign():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.array([0.3, -0.7])
    opt = AdamW({"p": p}, base_lr=0.1)
    opt.step()
    # Bias-corrected first step is lr * sign(grad) (up to eps).
    assert np.allclose(p.data, [1.0 - 0.1, -2.0 + 0.1], atol=1e-6)


def test_quadratic_convergence():
    p = Tensor(np.array([5.0]), requires_grad=True)
    opt = AdamW({"p": p}, base_lr=0.2)
    for _ in range(300):
        p.grad = 2.0 * (p.data - 1.5)  # d/dp (p - 1.5)^2
        opt.step()
    assert abs(p.data[0] - 1.5) < 1e-3


def test_decoupled_weight_decay_and_exemptions():
    w = Tensor(np.array([2.0]), requires_grad=True)
    b = Tensor(np.array([2.0]), requires_grad=True)
    opt = AdamW({"w": w, "b": b}, base_lr=0.1, weight_decay=0.5,
                decay_exempt={"b"})
    opt.step()  # no gradients: only decay acts
    assert w.data[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)
    assert b.data[0] == pytest.approx(2.0)


def test_zero_grad_clears():
    p = Tensor(np.array([1.0]), requires_grad=True)
    p.grad = np.array([1.0])
    opt = AdamW({"p": p})
    opt.zero_grad()
    assert p.grad is None


def test_explicit_lr_overrides_base():
    p = Tensor(np.array([0.0]), requires_grad=True)
    p.grad = np.array([1.0])
    opt = AdamW({"p": p}, base_lr=1.0)
    opt.step(lr=0.001)
    assert abs(p.data[0] + 0.001) < 1e-9


def test_state_tracks_parameters_independently():
    a = Tensor(np.array([1.0]), requires_grad=True)
    b = Tensor(np.array([1.0]), requires_grad=True)
    opt = AdamW({"a": a, "b": b}, base_lr=0.1)
    a.grad = np.array([1.0])
    b.grad = None
    opt.step()
    assert a.data[0] < 1.0
    assert b.data[0] == 1.0  # zero grad, zero decay: untouched
