import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchgan.errors import ContractError, DimensionError
from switchgan.tensor import (
    Tensor,
    channel_stats,
    concat,
    elementwise,
    finite_difference_check,
    narrow,
    no_grad,
)


def test_elementwise_add():
    out = elementwise("add", Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
    np.testing.assert_array_equal(out.data, [4.0, 6.0])


def test_elementwise_mul_annihilator(rng):
    x = Tensor(rng.standard_normal(7))
    np.testing.assert_array_equal(elementwise("mul", x, 0.0).data, np.zeros(7))


def test_elementwise_sub_identity():
    np.testing.assert_array_equal(elementwise("sub", Tensor([5.0]), Tensor([5.0])).data, [0.0])


def test_elementwise_unknown_kind():
    with pytest.raises(ContractError):
        elementwise("pow", Tensor([1.0]), Tensor([2.0]))


def test_shape_mismatch_raises():
    with pytest.raises(DimensionError):
        Tensor(np.zeros(3)) + Tensor(np.zeros(4))


def test_scalar_broadcast():
    out = Tensor([1.0, 2.0]) * 2.5
    np.testing.assert_array_equal(out.data, [2.5, 5.0])


# -- channel statistics -------------------------------------------------------


def test_channel_stats_constant_channel():
    x = Tensor(np.full((4, 4, 1), 7.0))
    mu, sigma = channel_stats(x)
    assert mu.data[0] == 7.0
    assert sigma.data[0] == 0.0


def test_channel_stats_derived_value():
    # channel [1, 2, 3, 4]: mean 2.5, population std sqrt(1.25)
    x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(2, 2, 1))
    mu, sigma = channel_stats(x)
    assert mu.data[0] == pytest.approx(2.5, abs=1e-12)
    assert sigma.data[0] == pytest.approx(1.1180339887498949, abs=1e-9)


def test_channel_stats_two_channels_one_zero(rng):
    x = np.zeros((3, 3, 2))
    x[:, :, 1] = rng.standard_normal((3, 3))
    mu, sigma = channel_stats(Tensor(x))
    assert mu.data[0] == 0.0
    assert sigma.data[0] == 0.0


def test_channel_stats_needs_3d():
    with pytest.raises(DimensionError):
        channel_stats(Tensor(np.zeros((4, 4))))


# -- backward -----------------------------------------------------------------


def test_backward_sum_gives_ones():
    x = Tensor(np.zeros(3), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])


def test_backward_square_derived():
    x = Tensor([2.0, 3.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [4.0, 6.0])


def test_backward_detached_leaf_stays_zero():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = Tensor([3.0], requires_grad=True)
    (y * y).sum().backward()
    np.testing.assert_array_equal(x.grad, [0.0, 0.0])


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_backward_additivity(rng):
    base = rng.standard_normal(6)
    x1 = Tensor(base, requires_grad=True)
    shared = x1 * x1
    loss1 = shared.sum()
    loss2 = (shared * 0.5).sum()
    (loss1 + loss2).backward()
    combined = x1.grad.copy()

    x2 = Tensor(base, requires_grad=True)
    shared2 = x2 * x2
    shared2.sum().backward()
    (shared2 * 0.5).sum().backward()
    np.testing.assert_allclose(x2.grad, combined, atol=1e-12)


def test_backward_deterministic(rng):
    base = rng.standard_normal(8)

    def run():
        x = Tensor(base, requires_grad=True)
        y = (x * x + x.relu() * 3.0 - (x.abs() + 1.0) ** 2).mean()
        y.backward()
        return x.grad.copy()

    np.testing.assert_array_equal(run(), run())


def test_no_grad_suppresses_tape():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with no_grad():
        y = (x * x).sum()
    assert not y.requires_grad
    assert y._prev == ()


def test_detach_cuts_graph():
    x = Tensor([3.0], requires_grad=True)
    y = (x * x).detach()
    (y * 2.0).sum().backward()
    np.testing.assert_array_equal(x.grad, [0.0])


# -- concat / narrow -------------------------------------------------------------


def test_concat_then_narrow_roundtrip(rng):
    a = Tensor(rng.standard_normal((3, 3, 2)))
    b = Tensor(rng.standard_normal((3, 3, 5)))
    joined = concat([a, b], axis=-1)
    np.testing.assert_array_equal(narrow(joined, 2, 0, 2).data, a.data)
    np.testing.assert_array_equal(narrow(joined, 2, 2, 5).data, b.data)


def test_concat_gradient_splits(rng):
    a = Tensor(rng.standard_normal((2, 2, 1)), requires_grad=True)
    b = Tensor(rng.standard_normal((2, 2, 3)), requires_grad=True)
    (concat([a, b], axis=-1) * 2.0).sum().backward()
    np.testing.assert_array_equal(a.grad, np.full((2, 2, 1), 2.0))
    np.testing.assert_array_equal(b.grad, np.full((2, 2, 3), 2.0))


def test_narrow_out_of_range():
    with pytest.raises(DimensionError):
        narrow(Tensor(np.zeros(4)), 0, 2, 5)


# -- finite difference oracle ------------------------------------------------------


def test_fd_check_quadratic():
    x = Tensor([1.0, 2.0])
    err = finite_difference_check(lambda t: (t * t).sum(), x, eps=1e-4)
    assert err < 1e-6


def test_fd_check_linear(rng):
    x = Tensor(rng.standard_normal(5))
    err = finite_difference_check(lambda t: t.sum(), x, eps=1e-4)
    assert err < 1e-10


def test_fd_check_relu_away_from_kink():
    x = Tensor([1.5, -2.0, 0.7, -0.4])
    err = finite_difference_check(lambda t: t.relu().sum(), x, eps=1e-5)
    assert err < 1e-5


def test_fd_check_rejects_nonscalar():
    with pytest.raises(ContractError):
        finite_difference_check(lambda t: t * 2.0, Tensor([1.0, 2.0]))


@pytest.mark.parametrize("func", [
    lambda t: ((t + 1.3) * (t - 0.4)).sum(),
    lambda t: ((t * t) / (t * t + 1.0)).sum(),
    lambda t: ((-t) ** 3).sum(),
    lambda t: (t.abs() * t).mean(),
    lambda t: (t.relu() ** 2).sum(),
    lambda t: ((t * t + 0.5).sqrt()).sum(),
    lambda t: (t.mean(axis=0) ** 2).sum(),
    lambda t: (t.sum(axis=1) * 3.0).mean(),
])
def test_fd_check_core_ops(rng, func):
    # inputs bounded away from the relu/abs/sqrt kinks
    base = rng.uniform(0.2, 1.5, size=(4, 3)) * rng.choice([-1.0, 1.0], size=(4, 3))
    assert finite_difference_check(lambda t: func(t), Tensor(base), eps=1e-6) < 1e-5


def test_fd_check_matmul(rng):
    w = Tensor(rng.standard_normal((4, 3)))
    x = Tensor(rng.standard_normal(4))
    assert finite_difference_check(lambda t: ((t @ w) ** 2).sum(), x, eps=1e-6) < 1e-5
    assert finite_difference_check(
        lambda t: ((x @ t) ** 2).sum(), w, eps=1e-6) < 1e-5


def test_fd_check_channel_stats(rng):
    x = Tensor(rng.standard_normal((4, 4, 2)) + 0.5)
    weights = rng.standard_normal(2)

    def f_mu(t):
        mu, _ = channel_stats(t)
        return (mu * Tensor(weights)).sum()

    def f_sigma(t):
        _, sigma = channel_stats(t)
        return (sigma * Tensor(weights)).sum()

    assert finite_difference_check(f_mu, x, eps=1e-6) < 1e-5
    assert finite_difference_check(f_sigma, x, eps=1e-6) < 1e-5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_fd_check_random_compositions(seed):
    r = np.random.default_rng(seed)
    base = r.uniform(0.3, 2.0, size=6) * r.choice([-1.0, 1.0], size=6)
    w = r.standard_normal(6)

    def f(t):
        return ((t * Tensor(w)).relu() ** 2 + (t.abs() + 0.1).sqrt()).sum()

    assert finite_difference_check(f, Tensor(base), eps=1e-6) < 1e-5
