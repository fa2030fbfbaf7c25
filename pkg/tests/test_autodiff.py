"""Reverse-mode tape: naive-loop oracles, closed forms, finite differences.

Convolution and pooling are checked against triple-loop reference
implementations written here from the definitions (cross-correlation with
zero same-padding; ceil-mode max with first-maximum tie routing), never
against the library's own fast paths.
"""

import numpy as np
import pytest

import neuroincept.autodiff as ad


# ---------------------------------------------------------------------------
# naive oracles
# ---------------------------------------------------------------------------


def naive_conv2d_same(x, k, b):
    """Definitional cross-correlation with zero same-padding."""
    kh, kw, cin, cout = k.shape
    H, W = x.shape[:2]
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((H, W, cout))
    for i in range(H):
        for j in range(W):
            acc = b.astype(np.float64).copy()
            for di in range(kh):
                for dj in range(kw):
                    ii, jj = i + di - ph, j + dj - pw
                    if 0 <= ii < H and 0 <= jj < W:
                        for c in range(cin):
                            acc = acc + x[ii, jj, c] * k[di, dj, c]
            out[i, j] = acc
    return out


def naive_maxpool(x, ph, pw, stride):
    """Ceil-mode max pooling; returns maxima and their source coordinates
    (first maximum in row-major window order)."""
    H, W, C = x.shape
    Ho, Wo = -(-H // stride), -(-W // stride)
    out = np.empty((Ho, Wo, C))
    src = np.empty((Ho, Wo, C, 2), dtype=int)
    for i in range(Ho):
        for j in range(Wo):
            for c in range(C):
                best, bi, bj = -np.inf, -1, -1
                for di in range(ph):
                    for dj in range(pw):
                        ii, jj = i * stride + di, j * stride + dj
                        if ii < H and jj < W and x[ii, jj, c] > best:
                            best, bi, bj = x[ii, jj, c], ii, jj
                out[i, j, c] = best
                src[i, j, c] = (bi, bj)
    return out, src


def routed_pool_grad(x_shape, src, g):
    gx = np.zeros(x_shape)
    Ho, Wo, C, _ = src.shape
    for i in range(Ho):
        for j in range(Wo):
            for c in range(C):
                bi, bj = src[i, j, c]
                gx[bi, bj, c] += g[i, j, c]
    return gx


# ---------------------------------------------------------------------------
# elementwise ops: values and closed-form gradients
# ---------------------------------------------------------------------------


def test_elementwise_values(rng):
    a = rng.normal(size=(4, 3))
    b = rng.normal(size=(4, 3))
    assert np.array_equal(ad.add(ad.param(a), ad.param(b)).value, a + b)
    assert np.array_equal(ad.sub(ad.param(a), ad.param(b)).value, a - b)
    assert np.array_equal(ad.hadamard(ad.param(a), ad.param(b)).value, a * b)
    assert np.array_equal(ad.scale(ad.param(a), 2.5).value, 2.5 * a)
    assert np.array_equal(ad.neg(ad.param(a)).value, -a)
    assert np.array_equal(ad.add_scalar(ad.param(a), 1.5).value, a + 1.5)
    assert np.array_equal(ad.relu(ad.param(a)).value, np.maximum(a, 0.0))
    assert np.allclose(ad.sigmoid(ad.param(a)).value, 1 / (1 + np.exp(-a)),
                       atol=1e-15)
    assert np.array_equal(ad.tanh(ad.param(a)).value, np.tanh(a))


def test_two_consumer_accumulation():
    """f(x) = x*x + x has gradient 2x + 1; x feeds two ops."""
    xv = np.array([0.5, -1.25, 2.0])
    x = ad.param(xv)
    y = ad.sum_all(ad.add(ad.hadamard(x, x), x))
    ad.backward(y)
    assert np.array_equal(x.grad, 2.0 * xv + 1.0)


def test_diamond_graph_gradient():
    """z = (x + x) * x = 2x^2, dz/dx = 4x through two paths."""
    xv = np.array([[1.5, -0.5], [2.0, 3.0]])
    x = ad.param(xv)
    z = ad.sum_all(ad.hadamard(ad.add(x, x), x))
    ad.backward(z)
    assert np.allclose(x.grad, 4.0 * xv, atol=1e-15)


def test_backward_accumulates_without_zero_grad():
    x = ad.param(np.array([1.0, 2.0]))
    loss = ad.sum_all(ad.hadamard(x, x))
    ad.backward(loss)
    first = x.grad.copy()
    loss2 = ad.sum_all(ad.hadamard(x, x))
    ad.backward(loss2)
    assert np.array_equal(x.grad, 2.0 * first)
    ad.zero_grad([x])
    assert np.array_equal(x.grad, np.zeros(2))


def test_backward_requires_scalar():
    x = ad.param(np.zeros(3))
    with pytest.raises(ValueError):
        ad.backward(ad.add(x, x))


# ---------------------------------------------------------------------------
# linear algebra ops
# ---------------------------------------------------------------------------


def test_matmul_value_and_closed_form_grads(rng):
    Xv, Wv = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    Gv = rng.normal(size=(5, 3))
    X, W = ad.param(Xv), ad.param(Wv)
    out = ad.matmul(X, W)
    assert np.array_equal(out.value, Xv @ Wv)
    # de/dX = G W^T and de/dW = X^T G for e = sum(out * G)
    loss = ad.sum_all(ad.hadamard(out, ad.param(Gv)))
    ad.backward(loss)
    assert np.allclose(X.grad, Gv @ Wv.T, atol=1e-13)
    assert np.allclose(W.grad, Xv.T @ Gv, atol=1e-13)


def test_matmul_vector_case(rng):
    xv, Wv = rng.normal(size=4), rng.normal(size=(4, 3))
    x, W = ad.param(xv), ad.param(Wv)
    out = ad.matmul(x, W)
    assert np.array_equal(out.value, xv @ Wv)
    ad.backward(ad.sum_all(out))
    assert np.allclose(x.grad, Wv.sum(axis=1), atol=1e-13)
    assert np.allclose(W.grad, np.outer(xv, np.ones(3)), atol=1e-13)


def test_add_bias_broadcast_and_grad(rng):
    av, bv = rng.normal(size=(6, 3)), rng.normal(size=3)
    a, b = ad.param(av), ad.param(bv)
    out = ad.add_bias(a, b)
    assert np.array_equal(out.value, av + bv)
    ad.backward(ad.sum_all(out))
    assert np.array_equal(a.grad, np.ones((6, 3)))
    assert np.array_equal(b.grad, np.full(3, 6.0))


def test_linear_model_closed_form_gradients(rng):
    """Full closed form for L = mean((XW + b - Y)^2)."""
    Xv = rng.normal(size=(8, 5))
    Wv = rng.normal(size=(5, 4))
    bv = rng.normal(size=4)
    Yv = rng.normal(size=(8, 4))
    X, W, b = ad.param(Xv), ad.param(Wv), ad.param(bv)
    loss = ad.mse(ad.add_bias(ad.matmul(X, W), b), Yv)
    ad.backward(loss)
    P = Xv @ Wv + bv
    G = (2.0 / P.size) * (P - Yv)
    assert np.max(np.abs(W.grad - Xv.T @ G)) <= 1e-12
    assert np.max(np.abs(b.grad - G.sum(axis=0))) <= 1e-12
    assert np.max(np.abs(X.grad - G @ Wv.T)) <= 1e-12


def test_shape_mismatches_raise(rng):
    a, b = ad.param(np.zeros((2, 3))), ad.param(np.zeros((3, 2)))
    for op in (ad.add, ad.sub, ad.hadamard):
        with pytest.raises(ValueError):
            op(a, b)
    with pytest.raises(ValueError):
        ad.matmul(ad.param(np.zeros((2, 3))), ad.param(np.zeros((2, 3))))
    with pytest.raises(ValueError):
        ad.add_bias(ad.param(np.zeros((2, 3))), ad.param(np.zeros(2)))
    with pytest.raises(ValueError):
        ad.mse(ad.param(np.zeros(3)), np.zeros(4))


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------


def test_reshape_flatten_round_trip(rng):
    v = rng.normal(size=(3, 4, 2))
    x = ad.param(v)
    y = ad.reshape(ad.flatten(x), (3, 4, 2))
    assert np.array_equal(y.value, v)
    ad.backward(ad.sum_all(y))
    assert np.array_equal(x.grad, np.ones_like(v))


def test_concat_channels_forward_and_split_grad(rng):
    av, bv = rng.normal(size=(4, 2)), rng.normal(size=(4, 3))
    gv = rng.normal(size=(4, 5))
    a, b = ad.param(av), ad.param(bv)
    out = ad.concat_channels([a, b])
    assert np.array_equal(out.value, np.concatenate([av, bv], axis=-1))
    ad.backward(ad.sum_all(ad.hadamard(out, ad.param(gv))))
    assert np.array_equal(a.grad, gv[:, :2])
    assert np.array_equal(b.grad, gv[:, 2:])


def test_select_and_stack_time_round_trip(rng):
    v = rng.normal(size=(5, 3))
    seq = ad.param(v)
    rebuilt = ad.stack_time([ad.select_time(seq, t) for t in range(5)])
    assert np.array_equal(rebuilt.value, v)
    ad.backward(ad.sum_all(rebuilt))
    assert np.array_equal(seq.grad, np.ones_like(v))


def test_select_time_batched(rng):
    v = rng.normal(size=(2, 5, 3))
    seq = ad.param(v)
    row = ad.select_time(seq, 2)
    assert np.array_equal(row.value, v[:, 2, :])
    ad.backward(ad.sum_all(row))
    expected = np.zeros_like(v)
    expected[:, 2, :] = 1.0
    assert np.array_equal(seq.grad, expected)


# ---------------------------------------------------------------------------
# convolution vs naive oracle
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kh,kw", [(1, 1), (3, 3), (5, 5), (3, 1)])
def test_conv2d_same_matches_naive(rng, kh, kw):
    x = rng.normal(size=(6, 7, 3))
    k = rng.normal(size=(kh, kw, 3, 4))
    b = rng.normal(size=4)
    got = ad.conv2d_same(ad.param(x), ad.param(k), ad.param(b)).value
    assert np.max(np.abs(got - naive_conv2d_same(x, k, b))) <= 1e-12


def test_conv2d_batched_equals_per_image(rng):
    x = rng.normal(size=(3, 5, 5, 2))
    k = rng.normal(size=(3, 3, 2, 4))
    b = rng.normal(size=4)
    batched = ad.conv2d_same(ad.param(x), ad.param(k), ad.param(b)).value
    for i in range(3):
        single = ad.conv2d_same(ad.param(x[i]), ad.param(k), ad.param(b)).value
        assert np.max(np.abs(batched[i] - single)) <= 1e-12


def test_conv2d_gradients_finite_difference(rng):
    x = ad.param(rng.normal(size=(5, 4, 2)))
    k = ad.param(rng.normal(size=(3, 3, 2, 3)))
    b = ad.param(rng.normal(size=3))
    tgt = rng.normal(size=(5, 4, 3))

    def f():
        return ad.mse(ad.conv2d_same(x, k, b), tgt)

    assert ad.grad_check(f, [x, k, b], n_sample=60) < 1e-6


def test_conv2d_validates_shapes():
    with pytest.raises(ValueError):  # even kernel
        ad.conv2d_same(ad.param(np.zeros((4, 4, 1))),
                       ad.param(np.zeros((2, 2, 1, 1))), ad.param(np.zeros(1)))
    with pytest.raises(ValueError):  # channel mismatch
        ad.conv2d_same(ad.param(np.zeros((4, 4, 2))),
                       ad.param(np.zeros((3, 3, 1, 1))), ad.param(np.zeros(1)))
    with pytest.raises(ValueError):  # bad bias
        ad.conv2d_same(ad.param(np.zeros((4, 4, 1))),
                       ad.param(np.zeros((3, 3, 1, 2))), ad.param(np.zeros(3)))


# ---------------------------------------------------------------------------
# max pooling vs naive oracle
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("shape,pool", [
    ((6, 6, 3), (2, 2, 2)),   # fast tiled path, even extent
    ((7, 5, 2), (2, 2, 2)),   # fast tiled path, clipped edges
    ((6, 6, 2), (3, 3, 2)),   # general path, overlapping windows
    ((5, 7, 2), (3, 2, 2)),   # general path, rectangular window
])
def test_maxpool_matches_naive(rng, shape, pool):
    x = rng.normal(size=shape)
    got = ad.maxpool2d(ad.param(x), *pool).value
    expected, _ = naive_maxpool(x, *pool)
    assert np.array_equal(got, expected)


@pytest.mark.parametrize("pool", [(2, 2, 2), (3, 3, 2)])
def test_maxpool_gradient_routing_with_ties(pool):
    """Engineered ties: every window constant, gradient must go to the
    first (row-major) cell of each window on both code paths."""
    x = np.ones((6, 6, 2))
    xg = ad.param(x)
    out = ad.maxpool2d(xg, *pool)
    _, src = naive_maxpool(x, *pool)
    g = np.arange(float(out.value.size)).reshape(out.value.shape) + 1.0
    ad.backward(ad.sum_all(ad.hadamard(out, ad.param(g))))
    assert np.array_equal(xg.grad, routed_pool_grad(x.shape, src, g))


@pytest.mark.parametrize("pool", [(2, 2, 2), (3, 3, 2)])
def test_maxpool_gradient_routing_random(rng, pool):
    x = rng.normal(size=(7, 6, 3))
    xg = ad.param(x)
    out = ad.maxpool2d(xg, *pool)
    _, src = naive_maxpool(x, *pool)
    g = rng.normal(size=out.value.shape)
    ad.backward(ad.sum_all(ad.hadamard(out, ad.param(g))))
    assert np.allclose(xg.grad, routed_pool_grad(x.shape, src, g), atol=1e-15)


def test_maxpool_batched_equals_per_image(rng):
    x = rng.normal(size=(4, 6, 5, 2))
    batched = ad.maxpool2d(ad.param(x), 2, 2, 2).value
    for i in range(4):
        single = ad.maxpool2d(ad.param(x[i]), 2, 2, 2).value
        assert np.array_equal(batched[i], single)


def test_maxpool_gradient_finite_difference(rng):
    # distinct values everywhere: max is differentiable away from ties
    x = ad.param(rng.permutation(48).astype(np.float64).reshape(6, 4, 2))
    tgt = rng.normal(size=(3, 2, 2))

    def f():
        return ad.mse(ad.maxpool2d(x, 2, 2, 2), tgt)

    assert ad.grad_check(f, [x], n_sample=48) < 1e-6


def test_maxpool_validates():
    with pytest.raises(ValueError):
        ad.maxpool2d(ad.param(np.zeros((4, 4))), 2, 2, 2)
    with pytest.raises(ValueError):
        ad.maxpool2d(ad.param(np.zeros((4, 4, 1))), 0, 2, 2)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def test_mse_value_and_grad(rng):
    p = rng.normal(size=(5, 3))
    t = rng.normal(size=(5, 3))
    pv = ad.param(p)
    loss = ad.mse(pv, t)
    assert abs(loss.value - np.mean((p - t) ** 2)) <= 1e-15
    ad.backward(loss)
    assert np.allclose(pv.grad, 2.0 * (p - t) / p.size, atol=1e-15)


def test_mse_gradvar_target_gets_negative_grad(rng):
    p, t = ad.param(rng.normal(size=4)), ad.param(rng.normal(size=4))
    ad.backward(ad.mse(p, t))
    assert np.array_equal(t.grad, -p.grad)


def test_sum_all(rng):
    v = rng.normal(size=(3, 3))
    x = ad.param(v)
    s = ad.sum_all(x)
    assert s.value == v.sum()
    ad.backward(s)
    assert np.array_equal(x.grad, np.ones_like(v))


# ---------------------------------------------------------------------------
# the checker itself
# ---------------------------------------------------------------------------


def test_grad_check_passes_composite_function(rng):
    x = ad.param(rng.normal(size=(4, 6)))
    w1 = ad.param(rng.normal(size=(6, 5)) * 0.5)
    b1 = ad.param(rng.normal(size=5) * 0.1)
    w2 = ad.param(rng.normal(size=(5, 2)) * 0.5)
    tgt = rng.normal(size=(4, 2))

    def f():
        h = ad.tanh(ad.add_bias(ad.matmul(x, w1), b1))
        return ad.mse(ad.sigmoid(ad.matmul(h, w2)), tgt)

    assert ad.grad_check(f, [x, w1, b1, w2]) < 1e-6


def test_grad_check_catches_planted_error(rng):
    """An op with a deliberately wrong backward rule must be flagged."""
    x = ad.param(rng.normal(size=6))
    tgt = rng.normal(size=6)

    def wrong_scale(a, c):
        out = ad.GradVar(a.value * c, (a,), op="wrong_scale")

        def bwd(g):
            a.grad += (c + 0.25) * g  # off by 0.25

        out._backward = bwd
        return out

    def f():
        return ad.mse(wrong_scale(x, 2.0), tgt)

    assert ad.grad_check(f, [x]) > 1e-2


def test_grad_check_subsamples_large_tensors(rng):
    big = ad.param(rng.normal(size=(50, 50)))  # 2500 > 40 coords

    def f():
        return ad.mse(ad.scale(big, 1.5), np.zeros((50, 50)))

    assert ad.grad_check(f, [big], n_sample=40) < 1e-6


def test_grad_check_validates_h():
    with pytest.raises(ValueError):
        ad.grad_check(lambda: ad.param(0.0), [], h=0.0)


def test_grad_check_rejects_nonfinite():
    x = ad.param(np.array([np.nan]))

    def f():
        return ad.sum_all(x)

    with pytest.raises(FloatingPointError):
        ad.grad_check(f, [x])
