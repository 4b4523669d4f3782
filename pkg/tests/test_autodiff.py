"""Finite-difference checks for every autodiff primitive, plus graph
mechanics (accumulation, no_grad, detach)."""

import numpy as np
import pytest

import slotseg.autodiff as ad
from slotseg.autodiff import Tensor, no_grad

from helpers import check_gradients


def leaf(rng, *shape, low=-2.0, high=2.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def scalarize(t):
    w = np.linspace(0.5, 1.5, int(np.prod(t.shape, dtype=int))).reshape(t.shape)
    return ad.sum_(ad.mul(t, Tensor(w)))


def test_add_sub_mul_div_broadcast():
    rng = np.random.default_rng(0)
    x = leaf(rng, 3, 1)
    y = leaf(rng, 1, 4)
    z = leaf(rng, 3, 4, low=0.5, high=2.0)

    def loss():
        a = ad.add(x, y)
        b = ad.sub(ad.mul(a, z), y)
        return scalarize(ad.div(b, z))

    check_gradients(loss, [x, y, z])


def test_power_exp_log_sqrt():
    rng = np.random.default_rng(1)
    x = leaf(rng, 5, low=0.3, high=2.0)

    def loss():
        return scalarize(ad.add(ad.power(x, 3.0),
                                ad.add(ad.exp(x),
                                       ad.add(ad.log(x), ad.sqrt(x)))))

    check_gradients(loss, [x])


def test_tanh_sigmoid_relu():
    rng = np.random.default_rng(2)
    data = rng.uniform(-2.0, 2.0, size=12)
    data[np.abs(data) < 0.1] = 0.5  # keep clear of the relu kink
    x = Tensor(data, requires_grad=True)

    def loss():
        return scalarize(ad.add(ad.tanh(x),
                                ad.add(ad.sigmoid(x), ad.relu(x))))

    check_gradients(loss, [x])


def test_sigmoid_extreme_logits_stable():
    x = Tensor(np.array([-800.0, -30.0, 0.0, 30.0, 800.0]),
               requires_grad=True)
    out = ad.sigmoid(x)
    assert np.all(np.isfinite(out.data))
    assert out.data[0] >= 0.0 and out.data[-1] <= 1.0
    ad.sum_(out).backward()
    assert np.all(np.isfinite(x.grad))


def test_clip_gradient_masking():
    x = Tensor(np.array([-2.0, -0.5, 0.3, 0.9, 2.5]), requires_grad=True)

    def loss():
        return scalarize(ad.clip(x, 0.0, 1.0))

    check_gradients(loss, [x])
    x.grad = None
    loss().backward()
    # only strictly-inside entries pass gradient
    inside = (x.data > 0.0) & (x.data < 1.0)
    assert np.all((x.grad != 0) == inside)


def test_sum_mean_axes():
    rng = np.random.default_rng(3)
    x = leaf(rng, 2, 3, 4)

    def loss():
        a = ad.sum_(x, axis=1)                      # (2, 4)
        b = ad.mean(x, axis=(0, 2), keepdims=True)  # (1, 3, 1)
        return ad.add(scalarize(a), ad.mul(ad.sum_(b), 2.0))

    check_gradients(loss, [x])


def test_softmax_rows_and_grad():
    rng = np.random.default_rng(4)
    x = leaf(rng, 5, 7)
    s = ad.softmax(x, axis=1)
    assert np.allclose(s.data.sum(axis=1), 1.0, atol=1e-12)

    def loss():
        return scalarize(ad.softmax(x, axis=1))

    check_gradients(loss, [x])

    def loss0():
        return scalarize(ad.softmax(x, axis=0))

    check_gradients(loss0, [x])


def test_matmul_plain_and_batched():
    rng = np.random.default_rng(5)
    a = leaf(rng, 3, 4)
    b = leaf(rng, 4, 5)
    c = leaf(rng, 2, 3, 4)
    d = leaf(rng, 4, 5)

    def loss():
        return ad.add(scalarize(ad.matmul(a, b)),
                      scalarize(ad.matmul(c, d)))

    check_gradients(loss, [a, b, c, d])


def test_reshape_transpose_concat_stack():
    rng = np.random.default_rng(6)
    x = leaf(rng, 2, 6)
    y = leaf(rng, 3, 4)

    def loss():
        a = ad.reshape(x, (3, 4))
        b = ad.transpose(ad.concat([a, y], axis=0), (1, 0))  # (4, 6)
        c = ad.stack([a, y])                                 # (2, 3, 4)
        return ad.add(scalarize(b), scalarize(c))

    check_gradients(loss, [x, y])


def test_slice_getitem_take_rows():
    rng = np.random.default_rng(7)
    x = leaf(rng, 6, 5)

    def loss():
        a = x[1:4, ::2]
        b = ad.take_rows(x, np.array([0, 0, 5]))  # repeated row accumulates
        return ad.add(scalarize(a), scalarize(b))

    check_gradients(loss, [x])


def test_pad2d():
    rng = np.random.default_rng(8)
    x = leaf(rng, 3, 4, 2)

    def loss():
        return scalarize(ad.pad2d(x, 1, 2, 0, 1))

    check_gradients(loss, [x])


def test_gradient_accumulation_reuse():
    x = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    y = ad.add(ad.mul(x, x), x)  # x^2 + x -> grad 2x + 1
    ad.sum_(y).backward()
    assert np.allclose(x.grad, 2.0 * x.data + 1.0)


def test_backward_accumulates_across_calls():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    ad.sum_(ad.mul(x, 3.0)).backward()
    ad.sum_(ad.mul(x, 3.0)).backward()
    assert np.allclose(x.grad, 6.0)
    x.zero_grad()
    assert x.grad is None


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = ad.mul(ad.add(x, 1.0), 2.0)
    assert y._parents == () and y._vjp is None and not y.requires_grad


def test_detach_blocks_gradient():
    x = Tensor(np.array([1.5]), requires_grad=True)
    y = ad.mul(x.detach(), 4.0)
    assert not y.requires_grad


def test_operator_sugar_matches_functions():
    rng = np.random.default_rng(9)
    a = Tensor(rng.normal(size=(2, 3)))
    b = Tensor(rng.uniform(0.5, 1.5, size=(2, 3)))
    assert np.allclose((a + b).data, ad.add(a, b).data)
    assert np.allclose((a - b).data, ad.sub(a, b).data)
    assert np.allclose((a * b).data, ad.mul(a, b).data)
    assert np.allclose((a / b).data, ad.div(a, b).data)
    assert np.allclose((a ** 2.0).data, ad.power(a, 2.0).data)
    assert np.allclose((-a).data, -a.data)
    assert np.allclose((a @ b.data.T).data, a.data @ b.data.T)


def test_non_scalar_backward_needs_seed():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = ad.mul(x, 3.0)
    y.backward(np.full((2, 2), 0.5))
    assert np.allclose(x.grad, 1.5)


def test_float64_everywhere():
    x = Tensor(np.ones(3, dtype=np.float32))
    assert x.data.dtype == np.float64
    assert ad.exp(x).data.dtype == np.float64
