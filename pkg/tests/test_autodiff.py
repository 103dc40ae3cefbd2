"""The tape engine: primitive adjoints against finite differences."""

import numpy as np
import pytest

from liquidlab import autodiff as ad
from liquidlab.autodiff import GradientTape, Tensor


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
        it.iternext()
    return g


def test_linear_chain():
    a = Tensor(np.array(3.0))
    x = np.array(2.0)
    with GradientTape() as tape:
        y = a * x
    (ga,) = tape.gradient(y, [a])
    assert ga == pytest.approx(2.0)


def test_unreached_source_gets_exact_zero():
    a = Tensor(np.array(3.0))
    b = Tensor(np.array(4.0))
    with GradientTape() as tape:
        y = a * a
    gb = tape.gradient(y, [b])[0]
    assert gb == 0.0 and gb.shape == ()


def test_broadcast_unbroadcast():
    a = Tensor(np.ones((3, 4)))
    b = Tensor(np.ones(4) * 2.0)
    with GradientTape() as tape:
        y = ad.sum_all(a * b + b)
    ga, gb = tape.gradient(y, [a, b])
    np.testing.assert_allclose(ga, np.full((3, 4), 2.0))
    np.testing.assert_allclose(gb, np.full(4, 3.0 + 3.0))


@pytest.mark.parametrize("op,ref", [
    (ad.sigmoid, lambda x: 1 / (1 + np.exp(-x))),
    (ad.tanh, np.tanh),
    (ad.reciprocal, lambda x: 1.0 / x),
])
def test_unary_adjoints(op, ref):
    rng = np.random.default_rng(0)
    x = rng.uniform(0.5, 1.5, (3, 5))
    xt = Tensor(x)
    with GradientTape() as tape:
        y = ad.sum_all(op(xt) * 0.7)
    (got,) = tape.gradient(y, [xt])
    want = fd_grad(lambda v: float(np.sum(ref(v)) * 0.7), x)
    np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-9)


def test_matmul_adjoints():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((3, 2))
    at, bt = Tensor(a), Tensor(b)
    with GradientTape() as tape:
        y = ad.sum_all(ad.matmul(at, bt) * 0.3)
    ga, gb = tape.gradient(y, [at, bt])
    np.testing.assert_allclose(
        ga, fd_grad(lambda v: float((v @ b).sum() * 0.3), a), atol=1e-8)
    np.testing.assert_allclose(
        gb, fd_grad(lambda v: float((a @ v).sum() * 0.3), b), atol=1e-8)
    # batched left operand
    a3 = rng.standard_normal((2, 4, 3))
    a3t = Tensor(a3)
    with GradientTape() as tape:
        y = ad.sum_all(ad.matmul(a3t, bt))
    ga3, = tape.gradient(y, [a3t])
    np.testing.assert_allclose(
        ga3, fd_grad(lambda v: float((v @ b).sum()), a3), atol=1e-8)


def test_take_and_index_adjoints():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 5))
    idx = np.array([0, 3, 3, 4])
    xt = Tensor(x)
    with GradientTape() as tape:
        y = ad.sum_all(ad.take_last(xt, idx) * 2.0) + ad.sum_all(
            ad.index_last(xt, 1))
    (gx,) = tape.gradient(y, [xt])
    want = np.zeros_like(x)
    for j in idx:
        want[:, j] += 2.0
    want[:, 1] += 1.0
    np.testing.assert_allclose(gx, want)


def test_segment_sum_with_empty_segments():
    values = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    ptr = np.array([0, 0, 2, 2, 3])
    out = ad.segment_sum_last(values, ptr)
    np.testing.assert_allclose(out, [[0, 3, 0, 3], [0, 9, 0, 6]])
    vt = Tensor(values)
    weights = np.array([1.0, 10.0, 100.0, 1000.0])
    with GradientTape() as tape:
        y = ad.sum_all(ad.segment_sum_last(vt, ptr) * weights)
    (gv,) = tape.gradient(y, [vt])
    np.testing.assert_allclose(gv, [[10, 10, 1000], [10, 10, 1000]])


def test_concat_and_reshape_adjoints():
    a = Tensor(np.arange(6.0).reshape(2, 3))
    b = Tensor(np.arange(4.0).reshape(2, 2))
    with GradientTape() as tape:
        y = ad.concat_last(a, b)
        z = ad.sum_all(ad.reshape(y, (10,)) * np.arange(10.0))
    ga, gb = tape.gradient(z, [a, b])
    np.testing.assert_allclose(ga, [[0, 1, 2], [5, 6, 7]])
    np.testing.assert_allclose(gb, [[3, 4], [8, 9]])


def test_mean_all_adjoint():
    x = Tensor(np.ones((2, 4)))
    with GradientTape() as tape:
        y = ad.mean_all(x * x)
    (gx,) = tape.gradient(y, [x])
    np.testing.assert_allclose(gx, np.full((2, 4), 2.0 / 8.0))


def test_reused_tensor_accumulates():
    a = Tensor(np.array(2.0))
    with GradientTape() as tape:
        y = a * a + a * 3.0
    (ga,) = tape.gradient(y, [a])
    assert ga == pytest.approx(2 * 2.0 + 3.0)


def test_ops_without_tape_return_arrays():
    x = np.ones((2, 2))
    assert isinstance(ad.sigmoid(x), np.ndarray)
    assert isinstance(ad.tanh(Tensor(x)), Tensor)  # tensors stay tensors


def test_tapes_do_not_nest():
    with GradientTape():
        with pytest.raises(RuntimeError):
            with GradientTape():
                pass
