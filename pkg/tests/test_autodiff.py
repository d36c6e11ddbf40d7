import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from nfcodec import autodiff as ad
from nfcodec.autodiff import Tensor
from nfcodec.prng import SplitMix64

from .gradcheck import check_grads, weighted_sum


def naive_conv3d(x, w, b, stride, padding):
    n, cin, d, h, wd = x.shape
    cout, _, k, _, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0)) + ((padding, padding),) * 3)
    out_sz = [(s + 2 * padding - k) // stride + 1 for s in (d, h, wd)]
    out = np.zeros((n, cout, *out_sz))
    for bi in range(n):
        for co in range(cout):
            for i in range(out_sz[0]):
                for j in range(out_sz[1]):
                    for l in range(out_sz[2]):
                        patch = xp[bi, :, i * stride:i * stride + k, j * stride:j * stride + k,
                                   l * stride:l * stride + k]
                        out[bi, co, i, j, l] = (patch * w[co]).sum() + (b[co] if b is not None else 0)
    return out


def naive_conv_transpose3d(x, w, b, stride, padding):
    n, cin, d, h, wd = x.shape
    _, cout, k, _, _ = w.shape
    full = [(s - 1) * stride + k for s in (d, h, wd)]
    out = np.zeros((n, cout, *full))
    for bi in range(n):
        for ci in range(cin):
            for i in range(d):
                for j in range(h):
                    for l in range(wd):
                        out[bi, :, i * stride:i * stride + k, j * stride:j * stride + k,
                            l * stride:l * stride + k] += x[bi, ci, i, j, l] * w[ci]
    if padding:
        out = out[:, :, padding:-padding, padding:-padding, padding:-padding]
    if b is not None:
        out = out + b[None, :, None, None, None]
    return out


# ---------------------------------------------------------------- conv3d

def test_conv3d_scalar():
    out = ad.conv3d(Tensor(np.full((1, 1, 1, 1, 1), 3.0)), Tensor(np.full((1, 1, 1, 1, 1), -2.5)),
                    Tensor(np.zeros(1)))
    assert out.data.item() == -7.5


def test_conv3d_identity_kernel(rng):
    x = rng.normal(size=(2, 1, 5, 5, 5))
    w = np.zeros((1, 1, 3, 3, 3))
    w[0, 0, 1, 1, 1] = 1.0
    np.testing.assert_array_equal(ad.conv3d(Tensor(x), Tensor(w), padding=1).data, x)


@pytest.mark.parametrize("k,stride,padding", [(3, 1, 1), (3, 2, 0), (2, 2, 1), (1, 1, 0), (4, 2, 1)])
def test_conv3d_matches_naive_loops(rng, k, stride, padding):
    x = rng.normal(size=(2, 3, 4, 4, 4))
    w = rng.normal(size=(5, 3, k, k, k))
    b = rng.normal(size=5)
    out = ad.conv3d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding).data
    ref = naive_conv3d(x, w, b, stride, padding)
    assert out.shape == ref.shape
    assert np.max(np.abs(out - ref)) <= 1e-6


def test_conv3d_output_size_rule(rng):
    for s, k, st_, p in [(7, 3, 2, 1), (8, 4, 3, 0), (5, 2, 1, 2)]:
        out = ad.conv3d(Tensor(rng.normal(size=(1, 1, s, s, s))),
                        Tensor(rng.normal(size=(1, 1, k, k, k))), stride=st_, padding=p)
        assert out.shape[2] == (s + 2 * p - k) // st_ + 1


def test_conv3d_shape_mismatch():
    with pytest.raises(ValueError):
        ad.conv3d(Tensor(np.zeros((1, 2, 4, 4, 4))), Tensor(np.zeros((1, 3, 3, 3, 3))))
    with pytest.raises(ValueError):
        ad.conv3d(Tensor(np.zeros((2, 4, 4, 4))), Tensor(np.zeros((1, 2, 3, 3, 3))))
    with pytest.raises(ValueError):
        ad.conv3d(Tensor(np.zeros((1, 2, 4, 4, 4))), Tensor(np.zeros((1, 2, 3, 3, 3))),
                  Tensor(np.zeros(2)))


# ---------------------------------------------------------------- conv_transpose3d

def test_conv_transpose_single_voxel_block():
    out = ad.conv_transpose3d(Tensor(np.full((1, 1, 1, 1, 1), 1.75)), Tensor(np.ones((1, 1, 2, 2, 2))),
                              stride=2)
    np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2, 2), 1.75))


@pytest.mark.parametrize("k,stride,padding,side", [(4, 2, 1, 3), (4, 2, 1, 1), (3, 2, 1, 3),
                                                   (2, 2, 0, 3), (3, 1, 1, 4), (4, 2, 0, 2)])
def test_conv_transpose_matches_naive_scatter(rng, k, stride, padding, side):
    x = rng.normal(size=(2, 3, side, side, side))
    w = rng.normal(size=(3, 2, k, k, k))
    b = rng.normal(size=2)
    out = ad.conv_transpose3d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding).data
    ref = naive_conv_transpose3d(x, w, b, stride, padding)
    assert out.shape == ref.shape
    assert out.shape[2] == (side - 1) * stride - 2 * padding + k
    assert np.max(np.abs(out - ref)) <= 1e-6


@pytest.mark.parametrize("k,stride,padding", [(4, 2, 1), (3, 1, 1), (3, 2, 1), (2, 2, 0)])
def test_conv_transpose_is_adjoint_of_conv(rng, k, stride, padding):
    # <conv(x), y> == <x, convT(y)> with the same weights (layout swap only)
    # sizes where the stride tiles the padded input exactly (no output padding needed)
    side = 8 + (8 + 2 * padding - k) % stride
    x = rng.normal(size=(2, 3, side, side, side))
    w = rng.normal(size=(4, 3, k, k, k))
    cx = ad.conv3d(Tensor(x), Tensor(w), stride=stride, padding=padding).data
    y = rng.normal(size=cx.shape)
    ty = ad.conv_transpose3d(Tensor(y), Tensor(w), stride=stride, padding=padding).data
    assert ty.shape == x.shape
    lhs, rhs = float((cx * y).sum()), float((x * ty).sum())
    assert abs(lhs - rhs) <= 1e-5 * max(1.0, abs(lhs))


def test_conv_transpose_equals_conv_input_gradient(rng):
    x = Tensor(rng.normal(size=(1, 2, 6, 6, 6)), requires_grad=True)
    w = rng.normal(size=(3, 2, 4, 4, 4))
    y = rng.normal(size=(1, 3, 3, 3, 3))
    ad.backward(weighted_sum(ad.conv3d(x, Tensor(w), stride=2, padding=1), y))
    direct = ad.conv_transpose3d(Tensor(y), Tensor(w), stride=2, padding=1).data
    np.testing.assert_allclose(x.grad, direct, atol=1e-12)


def test_fast_transposed_path_matches_general(rng):
    x = rng.normal(size=(2, 3, 4, 4, 4))
    w = rng.normal(size=(3, 2, 4, 4, 4))
    fast = ad.conv_transpose3d(Tensor(x), Tensor(w), stride=2, padding=1).data
    ref = naive_conv_transpose3d(x, w, None, 2, 1)
    np.testing.assert_allclose(fast, ref, atol=1e-12)


# ---------------------------------------------------------------- GDN and elementwise

def test_gdn_identity_case(rng):
    x = rng.normal(size=(2, 3, 2, 2, 2))
    out = ad.gdn3d(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros((3, 3))))
    np.testing.assert_array_equal(out.data, x)


def test_gdn_self_normalisation():
    eps = 1e-6
    out = ad.gdn3d(Tensor(np.full((1, 1, 1, 1, 1), 2.0)), Tensor(np.array([eps])),
                   Tensor(np.ones((1, 1))))
    assert out.item() == pytest.approx(2.0 / math.sqrt(eps + 4.0), rel=1e-15)
    assert out.item() == pytest.approx(1.0, abs=1e-6)


def test_gdn_formula(rng):
    x = rng.normal(size=(1, 3, 2, 2, 2))
    beta = rng.uniform(0.5, 1.5, 3)
    gamma = rng.uniform(0, 0.3, (3, 3))
    out = ad.gdn3d(Tensor(x), Tensor(beta), Tensor(gamma)).data
    for c in range(3):
        denom = np.sqrt(beta[c] + np.tensordot(gamma[c], x[0] ** 2, axes=1))
        np.testing.assert_allclose(out[0, c], x[0, c] / denom, rtol=1e-14)


def test_sigmoid_and_noise_identity():
    assert ad.sigmoid(Tensor(np.zeros(1))).item() == 0.5
    x = Tensor(np.arange(5.0))
    np.testing.assert_array_equal(ad.add_uniform_noise(x, 0.0, SplitMix64(1)).data, x.data)


def test_sigmoid_is_stable_at_extremes():
    s = ad.sigmoid(Tensor(np.array([-1000.0, 1000.0]))).data
    assert s[0] == 0.0 and s[1] == 1.0


def test_uniform_noise_chi_square():
    delta = 0.25
    x = Tensor(np.zeros(1_000_000))
    noise = ad.add_uniform_noise(x, delta, SplitMix64(99)).data
    assert noise.min() >= -delta / 2 and noise.max() < delta / 2
    counts, _ = np.histogram(noise, bins=50, range=(-delta / 2, delta / 2))
    _, p = stats.chisquare(counts)
    assert p > 1e-3


def test_noise_backward_is_identity(rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    g = rng.normal(size=(3, 4))
    ad.backward(weighted_sum(ad.add_uniform_noise(x, 1.0, SplitMix64(0)), g))
    np.testing.assert_array_equal(x.grad, g)


def test_noise_is_seeded():
    x = Tensor(np.zeros(10))
    a = ad.add_uniform_noise(x, 1.0, SplitMix64(5)).data
    b = ad.add_uniform_noise(x, 1.0, SplitMix64(5)).data
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------- backward

def test_backward_sum_is_ones(rng):
    x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    ad.backward(ad.sum(x))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_square(rng):
    x = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    ad.backward(ad.sum(ad.square(x)))
    np.testing.assert_allclose(x.grad, 2 * x.data, rtol=1e-15)


def test_backward_visits_shared_nodes_once(rng):
    # y is used twice; its gradient must be accumulated, not duplicated
    x = Tensor(rng.normal(size=5), requires_grad=True)
    y = ad.mul(x, 3.0)
    ad.backward(ad.sum(ad.add(y, y)))
    np.testing.assert_allclose(x.grad, np.full(5, 6.0))


def test_backward_leaves_accumulate(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    ad.backward(ad.sum(x))
    ad.backward(ad.sum(x))
    np.testing.assert_array_equal(x.grad, np.full(3, 2.0))
    ad.zero_grad([x])
    assert not x.grad.any()


def test_backward_needs_scalar():
    with pytest.raises(ValueError):
        ad.backward(Tensor(np.zeros(3), requires_grad=True))


def test_deep_graph_does_not_recurse():
    x = Tensor(np.ones(1), requires_grad=True)
    y = x
    for _ in range(5000):
        y = ad.add(y, 1e-3)
    ad.backward(ad.sum(y))
    assert x.grad[0] == 1.0


# ---------------------------------------------------------------- finite differences

def _shapes(seed, count=5):
    r = np.random.default_rng(seed)
    return [tuple(int(v) for v in r.integers(1, 4, size=2)) + tuple([int(r.integers(2, 5))] * 3)
            for _ in range(count)]


@pytest.mark.parametrize("op", ["add", "sub", "mul", "square", "exp", "relu", "sigmoid",
                                "softplus", "reshape", "gather"])
def test_elementwise_gradients(op):
    for i, shape in enumerate(_shapes(10)):
        r = np.random.default_rng(i)
        a = r.normal(size=shape)
        b = r.normal(size=shape)
        a[np.abs(a) < 0.05] = 0.3  # keep away from the relu kink
        up = r.normal(size=shape)
        fns = {
            "add": (lambda x, y: weighted_sum(ad.add(x, y), up), [a, b]),
            "sub": (lambda x, y: weighted_sum(ad.sub(x, y), up), [a, b]),
            "mul": (lambda x, y: weighted_sum(ad.mul(x, y), up), [a, b]),
            "square": (lambda x: weighted_sum(ad.square(x), up), [a]),
            "exp": (lambda x: weighted_sum(ad.exp(x), up), [a]),
            "relu": (lambda x: weighted_sum(ad.relu(x), up), [a]),
            "sigmoid": (lambda x: weighted_sum(ad.sigmoid(x), up), [a]),
            "softplus": (lambda x: weighted_sum(ad.softplus(x), up), [a]),
            "reshape": (lambda x: weighted_sum(ad.reshape(x, (-1,)), up.reshape(-1)), [a]),
            "gather": (lambda x: weighted_sum(ad.gather(x, [0, 0, shape[0] - 1]),
                                              np.stack([up[0], up[0], up[-1]])), [a]),
        }
        fn, inputs = fns[op]
        assert check_grads(fn, inputs, rng=r) <= 1e-4


def test_broadcast_add_gradient():
    r = np.random.default_rng(3)
    up = r.normal(size=(2, 3, 4))
    err = check_grads(lambda x, y: weighted_sum(ad.add(x, y), up),
                      [r.normal(size=(2, 3, 4)), r.normal(size=(3, 1))])
    assert err <= 1e-4


@pytest.mark.parametrize("k,stride,padding", [(3, 1, 1), (4, 2, 1), (2, 2, 0), (1, 1, 0)])
def test_conv3d_gradients(k, stride, padding):
    for i, (n, c, s, _, _) in enumerate(_shapes(20)):
        r = np.random.default_rng(100 + i)
        s = max(s, k)
        x, w, b = r.normal(size=(n, c, s, s, s)), r.normal(size=(2, c, k, k, k)), r.normal(size=2)
        out_shape = ad.conv3d(Tensor(x), Tensor(w), Tensor(b), stride, padding).shape
        up = r.normal(size=out_shape)
        err = check_grads(lambda x_, w_, b_: weighted_sum(ad.conv3d(x_, w_, b_, stride, padding), up),
                          [x, w, b], rng=r)
        assert err <= 1e-4


@pytest.mark.parametrize("k,stride,padding", [(4, 2, 1), (3, 1, 1), (2, 2, 0), (3, 2, 1)])
def test_conv_transpose3d_gradients(k, stride, padding):
    for i, (n, c, s, _, _) in enumerate(_shapes(30)):
        r = np.random.default_rng(200 + i)
        x, w, b = r.normal(size=(n, c, s, s, s)), r.normal(size=(c, 2, k, k, k)), r.normal(size=2)
        out_shape = ad.conv_transpose3d(Tensor(x), Tensor(w), Tensor(b), stride, padding).shape
        up = r.normal(size=out_shape)
        err = check_grads(
            lambda x_, w_, b_: weighted_sum(ad.conv_transpose3d(x_, w_, b_, stride, padding), up),
            [x, w, b], rng=r)
        assert err <= 1e-4


def test_gdn_gradients():
    for i, (n, c, s, _, _) in enumerate(_shapes(40)):
        r = np.random.default_rng(300 + i)
        x = r.normal(size=(n, c, s, s, s))
        beta = r.uniform(0.2, 2.0, c)
        gamma = r.uniform(0.01, 0.5, (c, c))
        up = r.normal(size=x.shape)
        err = check_grads(lambda x_, b_, g_: weighted_sum(ad.gdn3d(x_, b_, g_), up),
                          [x, beta, gamma], rng=r)
        assert err <= 1e-4


# ---------------------------------------------------------------- optimizer

def test_adam_zero_gradient_keeps_parameters():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = ad.Adam([p], lr=0.1)
    for _ in range(10):
        opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_moves_against_constant_gradient():
    p = Tensor(np.zeros(2), requires_grad=True)
    opt = ad.Adam([p], lr=0.01)
    for _ in range(50):
        p.grad[:] = [3.0, -0.5]
        opt.step()
    assert p.data[0] < 0 < p.data[1]


def test_adam_quadratic_bowl():
    target = np.array([1.5, -0.7])
    scale = np.array([1.0, 10.0])
    p = Tensor(np.zeros(2), requires_grad=True)
    opt = ad.Adam([p], lr=0.01)
    for step in range(5000):
        d = ad.sub(p, target)
        loss = ad.sum(ad.mul(ad.square(d), scale))
        ad.backward(loss)
        opt.step(ad.cosine_lr(step, 5000, 0.01, 1e-4))
        opt.zero_grad()
    assert np.max(np.abs(p.data - target)) < 1e-3


def test_adam_first_step_size():
    # bias correction makes the first step exactly lr * sign(g)
    p = Tensor(np.zeros(3), requires_grad=True)
    p.grad[:] = [2.0, -1e-3, 5.0]
    ad.Adam([p], lr=0.1, eps=0.0).step()
    np.testing.assert_allclose(p.data, [-0.1, 0.1, -0.1], rtol=1e-12)


def test_cosine_schedule_endpoints():
    assert ad.cosine_lr(0, 100, 1.0, 0.01) == 1.0
    assert ad.cosine_lr(99, 100, 1.0, 0.01) == pytest.approx(0.01)
    vals = [ad.cosine_lr(s, 100, 1.0, 0.01) for s in range(100)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


@given(st.integers(0, 2 ** 32))
def test_forward_backward_deterministic(seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(1, 2, 3, 3, 3))
    w = r.normal(size=(2, 2, 4, 4, 4))

    def run():
        xt, wt = Tensor(x, requires_grad=True), Tensor(w, requires_grad=True)
        out = ad.sigmoid(ad.conv_transpose3d(xt, wt, stride=2, padding=1))
        ad.backward(ad.sum(ad.add_uniform_noise(out, 0.5, SplitMix64(seed))))
        return out.data, xt.grad, wt.grad

    for a, b in zip(run(), run()):
        np.testing.assert_array_equal(a, b)
