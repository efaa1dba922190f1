"""Numerical-core checks: layer gradients, optimizer, checkpoint format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semiwtc import nn
from conftest import finite_difference, max_rel_error


def _rng(seed=0):
    return np.random.default_rng(seed)


def test_dense_forward_hand_value():
    # [DERIVED] y = x W^T + b for a 1x2 -> 2 layer with known weights
    layer = nn.DenseLayer(2, 2, _rng())
    layer.W = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    layer.b = np.array([0.5, -0.5], dtype=np.float32)
    y = layer.forward(np.array([[1.0, 1.0]], dtype=np.float32))
    np.testing.assert_allclose(y, [[3.5, 6.5]])


def test_dense_rejects_wrong_width():
    layer = nn.DenseLayer(3, 2, _rng())
    with pytest.raises(ValueError):
        layer.forward(np.zeros((1, 4), dtype=np.float32))


def test_dense_gradients_finite_difference():
    rng = _rng(1)
    layer = nn.DenseLayer(5, 3, rng)
    x = rng.normal(size=(4, 5))
    g_out = rng.normal(size=(4, 3))
    W = layer.W.astype(np.float64)
    b = layer.b.astype(np.float64)

    layer.forward(x.astype(np.float32))
    g_in, g_w, g_b = layer.backward(g_out.astype(np.float32))

    # float64 re-implementation as the finite-difference oracle
    num_w = finite_difference(lambda w: float(((x @ w.T + b) * g_out).sum()),
                              W, eps=1e-5)
    num_b = finite_difference(lambda bb: float(((x @ W.T + bb) * g_out).sum()),
                              b, eps=1e-5)
    num_in = finite_difference(lambda xv: float(((xv @ W.T + b) * g_out).sum()),
                               x, eps=1e-5)
    assert max_rel_error(g_w, num_w) < 1e-3
    assert max_rel_error(g_b, num_b) < 1e-3
    assert max_rel_error(g_in, num_in) < 1e-3


def test_batchnorm_train_stats_and_backward():
    rng = _rng(2)
    bn = nn.BatchNorm(4)
    x = rng.normal(loc=3.0, scale=2.0, size=(16, 4)).astype(np.float32)
    y = bn.forward(x, train=True)
    # [TRIVIAL] train-mode output is standardized per feature
    assert np.allclose(y.mean(axis=0), 0.0, atol=1e-5)
    assert np.allclose(y.std(axis=0), 1.0, atol=1e-3)

    g_out = rng.normal(size=x.shape).astype(np.float32)
    g_in, g_gamma, g_beta = bn.backward(g_out)

    gamma = bn.gamma.astype(np.float64)
    beta = bn.beta.astype(np.float64)

    def loss(xv):  # float64 re-implementation as the oracle
        m, v = xv.mean(axis=0), xv.var(axis=0)
        y = gamma * (xv - m) / np.sqrt(v + bn.eps) + beta
        return float((y * g_out).sum())

    numeric = finite_difference(loss, x.astype(np.float64), eps=1e-5)
    assert max_rel_error(g_in, numeric, floor=1e-4) < 1e-3
    assert np.allclose(g_beta, g_out.sum(axis=0))


def test_batchnorm_eval_uses_running_stats():
    bn = nn.BatchNorm(2, momentum=0.5)
    x = np.array([[0.0, 10.0], [2.0, 14.0]], dtype=np.float32)
    bn.forward(x, train=True)
    # [DERIVED] running mean = 0.5*0 + 0.5*batch mean = [0.5, 6.0]
    np.testing.assert_allclose(bn.running_mean, [0.5, 6.0])
    y = bn.forward(np.array([[0.5, 6.0]], dtype=np.float32), train=False)
    np.testing.assert_allclose(y, [[0.0, 0.0]], atol=1e-4)


def test_batchnorm_rejects_single_row_train():
    with pytest.raises(ValueError):
        nn.BatchNorm(2).forward(np.zeros((1, 2), dtype=np.float32), train=True)


@pytest.mark.parametrize("fwd,bwd", [
    (nn.relu, nn.relu_backward),
    (nn.softplus, nn.softplus_backward),
])
def test_activation_gradients(fwd, bwd):
    rng = _rng(3)
    x = rng.normal(size=(4, 6)) * 2
    x = x[np.abs(x) > 1e-2].reshape(1, -1)  # keep away from the relu kink
    g_out = rng.normal(size=x.shape)
    analytic = bwd(g_out, x)
    numeric = finite_difference(lambda xv: float((fwd(xv) * g_out).sum()), x,
                                eps=1e-6)
    assert max_rel_error(analytic, numeric) < 1e-3


def test_softplus_matches_naive_and_is_stable():
    x = np.array([-800.0, -1.0, 0.0, 1.0, 800.0])
    y = nn.softplus(x)
    assert np.all(np.isfinite(y))
    mid = np.log1p(np.exp(x[1:4]))  # naive formula where it is safe
    assert y[1:4] == pytest.approx(mid, rel=1e-12)
    assert y[4] == pytest.approx(800.0)


def test_softmax_gradient_via_probability_chain():
    rng = _rng(4)
    z = rng.normal(size=(3, 5))
    g_probs = rng.normal(size=(3, 5))
    probs = nn.softmax(z)
    analytic = nn.softmax_backward(g_probs, probs)
    numeric = finite_difference(lambda zv: float((nn.softmax(zv) * g_probs).sum()),
                                z, eps=1e-6)
    assert max_rel_error(analytic, numeric) < 1e-3


@settings(deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_softmax_rows_are_distributions(seed):
    z = np.random.default_rng(seed).normal(scale=50, size=(4, 6))
    p = nn.softmax(z)
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_adam_first_step_hand_value():
    # [DERIVED] after one bias-corrected step, update = lr * g/(|g| + eps)
    p = np.array([1.0, -2.0], dtype=np.float32)
    opt = nn.Adam([p], lr=0.1)
    g = np.array([0.5, -3.0], dtype=np.float32)
    opt.step([g.copy()])
    assert p == pytest.approx([1.0 - 0.1, -2.0 + 0.1], abs=1e-5)


def test_adam_matches_reference_implementation():
    # [DERIVED] independent textbook Adam recurrence over several steps
    rng = _rng(5)
    p = rng.normal(size=(3, 2)).astype(np.float32)
    ref = p.astype(np.float64).copy()
    opt = nn.Adam([p], lr=0.01)
    m = np.zeros_like(ref)
    v = np.zeros_like(ref)
    for t in range(1, 8):
        g = rng.normal(size=ref.shape)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mhat = m / (1 - 0.9 ** t)
        vhat = v / (1 - 0.999 ** t)
        ref -= 0.01 * mhat / (np.sqrt(vhat) + 1e-8)
        opt.step([g.astype(np.float32)])
    assert np.allclose(p, ref, atol=1e-4)


def test_adam_skips_none_and_rejects_nan():
    p = np.ones(2, dtype=np.float32)
    q = np.ones(2, dtype=np.float32)
    opt = nn.Adam([p, q])
    opt.step([None, np.ones(2, dtype=np.float32)])
    assert np.all(p == 1.0) and not np.all(q == 1.0)
    with pytest.raises(nn.NaNGradientError):
        opt.step([np.array([np.nan, 0.0], dtype=np.float32), None])


def test_checkpoint_round_trip(tmp_path):
    rng = _rng(6)
    arrays = [rng.normal(size=(3, 4)).astype(np.float32),
              rng.normal(size=(7,)).astype(np.float32)]
    path = tmp_path / "weights.ckpt"
    nn.save_arrays(path, arrays, {"note": "unit-test"})
    loaded, header = nn.load_arrays(path)
    assert header["note"] == "unit-test"
    assert len(loaded) == 2
    for a, b in zip(arrays, loaded):
        assert a.shape == b.shape
        assert np.array_equal(a, b)


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bogus.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        nn.load_arrays(path)
