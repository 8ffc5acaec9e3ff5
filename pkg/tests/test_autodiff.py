"""Reverse-mode tape vs central finite differences.

Each op is exercised inside a scalar-valued expression; the tape's gradient
for every input entry is compared against (f(x+h) - f(x-h)) / 2h computed by
rebuilding the forward pass on perturbed copies.
"""

import numpy as np
import pytest

from uncscreen.autodiff import Tensor, as_tensor

RNG = np.random.default_rng(12345)
H = 1e-6
ATOL = 1e-6


def fd_gradient(make_loss, values):
    """Numeric gradient of a scalar loss w.r.t. one input array."""
    grad = np.zeros_like(values)
    it = np.nditer(values, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        hi, lo = values.copy(), values.copy()
        hi[idx] += H
        lo[idx] -= H
        grad[idx] = (make_loss(hi) - make_loss(lo)) / (2 * H)
    return grad


def check_unary(build, values):
    """Compare tape and FD gradients for loss = build(Tensor(values))."""
    t = Tensor(values, requires_grad=True)
    loss = build(t)
    loss.backward()
    numeric = fd_gradient(lambda v: build(Tensor(v)).item(), values)
    np.testing.assert_allclose(t.grad, numeric, atol=ATOL)


def test_add_mul_chain():
    a = RNG.normal(size=(3, 4))
    check_unary(lambda t: ((t + 2.0) * t).sum(), a)


def test_sub_div_chain():
    a = RNG.normal(size=(3, 4)) + 5.0
    check_unary(lambda t: ((10.0 - t) / (t * 0.5)).sum(), a)


def test_reflected_ops_match_direct():
    a = RNG.normal(size=(2, 3))
    t1 = Tensor(a, requires_grad=True)
    loss1 = (1.0 + t1 * 2.0 - (t1 / 2.0)).sum()
    loss1.backward()
    t2 = Tensor(a, requires_grad=True)
    loss2 = ((t2 * 2.0 + 1.0) - (t2 * 0.5)).sum()
    loss2.backward()
    np.testing.assert_allclose(t1.grad, t2.grad, atol=1e-12)


def test_ndarray_left_operand_defers_to_tensor():
    a = np.full((2, 2), 3.0)
    t = Tensor(np.ones((2, 2)), requires_grad=True)
    out = a - t
    assert isinstance(out, Tensor)
    out.sum().backward()
    np.testing.assert_allclose(t.grad, -np.ones((2, 2)))


def test_matmul_both_sides():
    a = RNG.normal(size=(4, 3))
    b = RNG.normal(size=(3, 2))
    ta = Tensor(a, requires_grad=True)
    tb = Tensor(b, requires_grad=True)
    (ta @ tb).sum().backward()
    np.testing.assert_allclose(
        ta.grad, fd_gradient(lambda v: (Tensor(v) @ as_tensor(b)).sum().item(), a), atol=ATOL
    )
    np.testing.assert_allclose(
        tb.grad, fd_gradient(lambda v: (as_tensor(a) @ Tensor(v)).sum().item(), b), atol=ATOL
    )


def test_broadcast_add_unbroadcasts_bias():
    x = RNG.normal(size=(5, 3))
    b = RNG.normal(size=3)
    tb = Tensor(b, requires_grad=True)
    (as_tensor(x) + tb).sum().backward()
    assert tb.grad.shape == (3,)
    np.testing.assert_allclose(
        tb.grad, fd_gradient(lambda v: (as_tensor(x) + Tensor(v)).sum().item(), b), atol=ATOL
    )


def test_relu_gradient_away_from_kink():
    a = RNG.normal(size=(4, 4))
    a[np.abs(a) < 0.05] = 0.5  # keep the finite step on one side of 0
    check_unary(lambda t: (t.relu() * t.relu()).sum(), a)


def test_exp_log_sqrt():
    a = np.abs(RNG.normal(size=(3, 3))) + 0.5
    check_unary(lambda t: t.exp().sum(), a)
    check_unary(lambda t: t.log().sum(), a)
    check_unary(lambda t: t.sqrt().sum(), a)


def test_pow_const_with_elementwise_exponent():
    base = RNG.uniform(0.2, 0.9, size=(4, 3))
    expo = RNG.uniform(0.5, 3.0, size=(4, 1))
    check_unary(lambda t: t.pow_const(expo).sum(), base)


def test_clip_min_blocks_gradient_below_floor():
    a = np.array([[0.5, 1e-15], [2.0, 1e-20]])
    t = Tensor(a, requires_grad=True)
    t.clip_min(1e-12).log().sum().backward()
    assert t.grad[0, 1] == 0.0 and t.grad[1, 1] == 0.0
    assert t.grad[0, 0] == pytest.approx(1 / 0.5)


def test_sum_axis_and_mean():
    a = RNG.normal(size=(3, 5))
    check_unary(lambda t: (t.sum(axis=1) * t.sum(axis=1)).sum(), a)
    check_unary(lambda t: t.mean(), a)
    check_unary(lambda t: (t.mean(axis=0) * 3.0).sum(), a)


def test_reshape_round_trip():
    a = RNG.normal(size=(2, 6))
    check_unary(lambda t: (t.reshape(12) * t.reshape(12)).sum(), a)


def test_softmax_rows_and_gradient():
    a = RNG.normal(size=(4, 3)) * 2.0
    probs = Tensor(a).softmax()
    np.testing.assert_allclose(probs.data.sum(axis=1), np.ones(4), atol=1e-12)
    w = RNG.normal(size=(4, 3))  # random linear functional of the probs
    check_unary(lambda t: (t.softmax() * w).sum(), a)


def test_softmax_shift_invariance():
    a = RNG.normal(size=(3, 4))
    p1 = Tensor(a).softmax().data
    p2 = Tensor(a + 100.0).softmax().data
    np.testing.assert_allclose(p1, p2, atol=1e-12)


def test_fan_out_accumulates():
    a = RNG.normal(size=(3,))
    t = Tensor(a, requires_grad=True)
    y = t * 2.0
    (y + y * y).sum().backward()
    np.testing.assert_allclose(t.grad, 2.0 + 8.0 * a, atol=1e-9)


def test_backward_requires_scalar():
    t = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (t * 2.0).backward()


def test_backward_is_one_shot():
    t = Tensor(np.ones(3), requires_grad=True)
    loss = (t * t).sum()
    loss.backward()
    with pytest.raises(RuntimeError):
        loss.backward()


def test_deep_chain_does_not_overflow_stack():
    t = Tensor(np.ones(2), requires_grad=True)
    x = t
    for _ in range(5000):
        x = x + 1.0
    x.sum().backward()
    np.testing.assert_allclose(t.grad, np.ones(2))


def test_constants_collect_no_gradient():
    t = Tensor(np.ones(3), requires_grad=True)
    c = as_tensor(np.full(3, 2.0))
    (t * c).sum().backward()
    assert c.grad is None or not c.requires_grad
