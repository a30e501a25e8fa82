import math

import numpy as np
import pytest
from scipy import integrate

from satgail.nn import (LOG_STD_MAX, LOG_STD_MIN, Adam, MlpNet, gaussian_head_backward,
                        gaussian_head_sample, linear_schedule, load_net, log1m_tanh_sq,
                        save_net, sigmoid, softplus)

EPS = 1e-6


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def fd_grad(f, flat):
    g = np.zeros_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + EPS
        up = f()
        flat[i] = old - EPS
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2 * EPS)
    return g


def head_loss_and_grad(net, x, w, noise=None):
    """Scalar loss on the head output and its analytic parameter gradient."""
    out, cache = net.forward(x)
    if net.head == "gaussian":
        k = out.shape[1] // 2
        mean, log_std = out[:, :k], out[:, k:]
        _, a, logp, _ = gaussian_head_sample(mean, log_std, noise=noise)
        loss = float(np.sum(w[:, :k] * a) + np.sum(w[:, k] * logp))
        gm, gls = gaussian_head_backward(mean, log_std, noise, w[:, :k], w[:, k])
        grads, _ = net.backward(cache, np.concatenate([gm, gls], axis=1))
    else:
        loss = float(np.sum(w * out))
        grads, _ = net.backward(cache, w)
    return loss, grads.flat


def check_head(head, seed, activation="tanh"):
    rng = np.random.default_rng(seed)
    out_dim = 4 if head == "gaussian" else 2
    net = MlpNet([3, 5, 4, out_dim], activation, head, rng)
    x = rng.normal(size=(6, 3))
    w = rng.normal(size=(6, out_dim))
    noise = rng.normal(size=(6, out_dim // 2)) if head == "gaussian" else None
    _, g = head_loss_and_grad(net, x, w, noise)
    g_fd = fd_grad(lambda: head_loss_and_grad(net, x, w, noise)[0], net.flat)
    return rel_err(g, g_fd)


@pytest.mark.parametrize("head", ["linear", "gaussian", "sigmoid"])
def test_finite_difference_heads_many_seeds(head):
    errs = [check_head(head, s) for s in range(100)]
    assert max(errs) < 1e-4


def test_finite_difference_relu_trunk():
    # kinks are measure-zero; random inputs essentially never hit them
    assert max(check_head("gaussian", s, "relu") for s in range(20)) < 1e-4


def test_input_gradient():
    rng = np.random.default_rng(0)
    net = MlpNet([4, 6, 3], "tanh", "linear", rng)
    x = rng.normal(size=(2, 4))
    w = rng.normal(size=(2, 3))
    _, cache = net.forward(x)
    _, gx = net.backward(cache, w, param_grads=False)
    gx_fd = fd_grad(lambda: float(np.sum(w * net.forward(x)[0])), x.reshape(-1)).reshape(x.shape)
    assert rel_err(gx, gx_fd) < 1e-6


def test_linear_layer_closed_form_gradient():
    rng = np.random.default_rng(1)
    net = MlpNet([3, 1], head="linear", rng=rng)
    X = rng.normal(size=(50, 3))
    y = rng.normal(size=(50, 1))
    pred, cache = net.forward(X)
    grads, _ = net.backward(cache, (pred - y) / len(X))
    W, b = net.params
    np.testing.assert_allclose(grads[0], X.T @ (X @ W + b - y) / 50, atol=1e-14)
    np.testing.assert_allclose(grads[1], np.mean(X @ W + b - y, axis=0), atol=1e-14)


def test_log_std_clamp_and_masked_gradient():
    net = MlpNet([1, 2], head="gaussian")
    net.params[1][...] = [0.0, 50.0]
    out, cache = net.forward(np.zeros((1, 1)))
    assert out[0, 1] == LOG_STD_MAX
    grads, _ = net.backward(cache, np.ones((1, 2)))
    assert grads[1][1] == 0.0 and grads[1][0] == 1.0
    net.params[1][...] = [0.0, -50.0]
    assert net.forward(np.zeros((1, 1)))[0][0, 1] == LOG_STD_MIN


def test_squashed_density_integrates_to_one():
    mean, log_std = np.array([0.4]), np.array([-0.3])

    def density(a):
        u = math.atanh(a)
        noise = (u - mean) / math.exp(log_std[0])
        return math.exp(float(gaussian_head_sample(mean, log_std, noise=noise)[2]))

    total, _ = integrate.quad(density, -1 + 1e-12, 1 - 1e-12, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_log1m_tanh_sq_stable():
    u = np.array([-30.0, -1.0, 0.0, 0.5, 30.0])
    ref = np.log1p(-np.tanh(u[1:4]) ** 2)
    np.testing.assert_allclose(log1m_tanh_sq(u[1:4]), ref, rtol=1e-12)
    assert np.all(np.isfinite(log1m_tanh_sq(u)))
    assert log1m_tanh_sq(30.0) == pytest.approx(math.log(4) - 60.0, rel=1e-12)


def test_sigmoid_strictly_inside_unit_interval():
    z = np.array([-700.0, -40.0, 0.0, 40.0])
    p = sigmoid(z)
    assert np.all(p > 0) and p[2] == 0.5
    np.testing.assert_allclose(softplus(np.array([0.0])), [math.log(2)])


def test_adam_first_step_moves_each_coordinate_by_lr():
    p = np.array([1.0, -2.0, 3.0])
    opt = Adam([p], lr=0.01)
    opt.step([np.array([5.0, -0.3, 1e-3])])
    np.testing.assert_allclose(p, [0.99, -1.99, 3.0 - 0.01 * 1e-3 / (1e-3 + 1e-8)], atol=1e-12)
    with pytest.raises(FloatingPointError):
        opt.step([np.array([np.nan, 0.0, 0.0])])


def test_adam_minimizes_quadratic():
    p = np.array([3.0, -4.0])
    opt = Adam([p], lr=0.05)
    for _ in range(2000):
        opt.step([2 * p])
    assert np.linalg.norm(p) < 1e-3


def test_linear_schedule():
    assert linear_schedule(1e-3, 1e-4, 0.0) == 1e-3
    assert linear_schedule(1e-3, 1e-4, 1.0) == 1e-4
    assert linear_schedule(1e-3, 1e-4, 2.0) == 1e-4
    assert linear_schedule(1e-3, 1e-4, 0.5) == pytest.approx(5.5e-4)


def test_params_are_views_of_flat():
    net = MlpNet([2, 3, 1])
    net.flat[:] = 0.0
    assert all(np.all(p == 0) for p in net.params)
    clone = net.copy()
    clone.flat[0] = 1.0
    assert net.flat[0] == 0.0


def test_checkpoint_round_trip(tmp_path):
    net = MlpNet([7, 8, 6], "relu", "gaussian", np.random.default_rng(3))
    save_net(net, tmp_path / "p.bin")
    back = load_net(tmp_path / "p.bin")
    np.testing.assert_array_equal(back.flat, net.flat)
    assert (back.layer_dims, back.head, back.activation) == (net.layer_dims, "gaussian", "relu")
    x = np.random.default_rng(0).normal(size=(4, 7))
    np.testing.assert_array_equal(back(x), net(x))


def test_checkpoint_corruption_detected(tmp_path):
    net = MlpNet([2, 2])
    save_net(net, tmp_path / "n.bin")
    data = (tmp_path / "n.bin").read_bytes()
    (tmp_path / "short.bin").write_bytes(data[:-8])
    with pytest.raises(ValueError, match="parameters"):
        load_net(tmp_path / "short.bin")
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError, match="not a network"):
        load_net(tmp_path / "bad.bin")


def test_constructor_validation():
    with pytest.raises(ValueError):
        MlpNet([3, 3], head="softmax")
    with pytest.raises(ValueError):
        MlpNet([3, 3], head="gaussian")
    with pytest.raises(ValueError):
        MlpNet([3, 2]).forward(np.zeros((1, 4)))
