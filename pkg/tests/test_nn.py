"""Network stack tests: forward values, backprop vs finite differences,
policy distribution algebra, Adam, and checkpoint round-trips."""

import numpy as np
import pytest

from peginhole.nn import (
    LOG_2PI,
    LOG_STD_MAX,
    LOG_STD_MIN,
    MLP,
    Adam,
    GaussianPolicy,
    ValueNet,
    clip_grad_norm,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
)


def test_forward_zero_net():
    net = MLP([3, 4, 2])
    for w in net.weights:
        w[...] = 0.0
    out = net.forward(np.ones((5, 3)))
    np.testing.assert_array_equal(out, np.zeros((5, 2)))


def test_forward_hand_computed():
    # 1 -> 1 -> 1 chain with known weights: y = w2*tanh(w1*x + b1) + b2
    net = MLP([1, 1, 1])
    net.weights[0][...] = 0.5
    net.biases[0][...] = 0.1
    net.weights[1][...] = -2.0
    net.biases[1][...] = 0.25
    out = net.forward(np.array([[0.8]]))
    expected = -2.0 * np.tanh(0.5 * 0.8 + 0.1) + 0.25
    assert out[0, 0] == pytest.approx(expected, abs=1e-15)


def test_forward_deterministic_and_pure():
    rng = np.random.default_rng(0)
    net = MLP([27, 64, 64, 6], rng=rng)
    x = rng.standard_normal((7, 27))
    w_before = [w.copy() for w in net.weights]
    a = net.forward(x)
    b = net.forward(x)
    np.testing.assert_array_equal(a, b)
    for w, w0 in zip(net.weights, w_before):
        np.testing.assert_array_equal(w, w0)


def test_forward_shape_mismatch():
    net = MLP([3, 4, 2])
    with pytest.raises(ValueError):
        net.forward(np.ones((2, 4)))


def test_backward_before_forward():
    net = MLP([3, 4, 2])
    with pytest.raises(RuntimeError):
        net.backward(np.ones((1, 2)))


def test_linear_net_gradient_is_input():
    net = MLP([4, 1])  # single affine layer, scalar output
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 4))
    net.zero_grad()
    net.forward(x)
    net.backward(np.ones((1, 1)))
    np.testing.assert_allclose(net.w_grads[0][:, 0], x[0], atol=1e-15)


def test_backward_accumulates():
    rng = np.random.default_rng(2)
    net = MLP([5, 8, 3], rng=rng)
    x = rng.standard_normal((2, 5))
    up = rng.standard_normal((2, 3))
    net.zero_grad()
    net.forward(x)
    net.backward(up)
    once = [g.copy() for g in net.gradients()]
    net.forward(x)
    net.backward(up)
    for g1, g2 in zip(once, net.gradients()):
        np.testing.assert_allclose(g2, 2.0 * g1, atol=1e-12)


def test_gradient_check_suite():
    max_err, per_net, per_layer = gradient_check(n_nets=5, seed=3)
    assert max_err <= 1e-6
    assert len(per_net) == 5
    assert set(per_layer) == {"W0", "W1", "W2", "b0", "b1", "b2"}


def test_policy_parameter_count():
    policy = GaussianPolicy()
    n = sum(p.size for p in policy.trunk.parameters())
    assert n == 27 * 64 + 64 + 64 * 64 + 64 + 64 * 6 + 6


def test_policy_sample_zero_std_limit():
    policy = GaussianPolicy()
    policy.log_std[:] = -20.0  # sigma -> 0 limit
    rng = np.random.default_rng(4)
    obs = rng.standard_normal((1, 27))
    mean = policy.trunk.forward(obs)
    action, _, _ = policy.sample(obs, rng)
    np.testing.assert_allclose(action, np.clip(mean, -1, 1), atol=1e-8)


def test_log_prob_at_mode():
    policy = GaussianPolicy()
    rng = np.random.default_rng(5)
    obs = rng.standard_normal((1, 27))
    mean = policy.trunk.forward(obs)
    lp = policy.log_prob(obs, mean)
    expected = -np.sum(policy.log_std) - 3.0 * LOG_2PI
    assert lp[0] == pytest.approx(expected, abs=1e-12)


def test_log_prob_consistent_with_sample():
    policy = GaussianPolicy()
    rng = np.random.default_rng(6)
    obs = rng.standard_normal((3, 27))
    _, raw, lp = policy.sample(obs, rng)
    np.testing.assert_allclose(policy.log_prob(obs, raw), lp, atol=1e-12)


def test_ratio_is_one_at_same_parameters():
    policy = GaussianPolicy()
    rng = np.random.default_rng(7)
    obs = rng.standard_normal((10, 27))
    _, raw, lp_old = policy.sample(obs, rng)
    lp_new = policy.log_prob(obs, raw)
    np.testing.assert_allclose(np.exp(lp_new - lp_old), np.ones(10), atol=1e-12)


def test_sigma_shift_costs_half():
    policy = GaussianPolicy()
    rng = np.random.default_rng(8)
    obs = rng.standard_normal((1, 27))
    mean = policy.trunk.forward(obs)
    shifted = mean.copy()
    shifted[0, 2] += np.exp(policy.log_std[2])
    assert policy.log_prob(obs, mean)[0] - policy.log_prob(obs, shifted)[0] \
        == pytest.approx(0.5, abs=1e-12)


def test_sample_statistics():
    policy = GaussianPolicy()
    rng = np.random.default_rng(9)
    obs = np.tile(rng.standard_normal(27), (10000, 1))
    _, raw, _ = policy.sample(obs, rng)
    mean = policy.trunk.forward(obs[:1])[0]
    sigma = np.exp(policy.log_std)
    for k in range(6):
        assert abs(raw[:, k].mean() - mean[k]) <= 3 * sigma[k] / np.sqrt(10000)


def test_log_std_clamp():
    policy = GaussianPolicy()
    policy.log_std[:] = np.array([-10.0, 10.0, 0.0, -5.0, 2.0, 1.0])
    policy.clamp_log_std()
    assert np.all(policy.log_std >= LOG_STD_MIN)
    assert np.all(policy.log_std <= LOG_STD_MAX)


def test_adam_zero_gradient_no_move():
    rng = np.random.default_rng(10)
    p = rng.standard_normal((4, 3))
    before = p.copy()
    opt = Adam([p])
    opt.step([np.zeros_like(p)])
    np.testing.assert_array_equal(p, before)


def test_adam_first_step_magnitude():
    p = np.zeros(5)
    opt = Adam([p], lr=1e-3)
    opt.step([np.full(5, 0.37)])
    np.testing.assert_allclose(np.abs(p), 1e-3, rtol=1e-6)


def test_adam_deterministic():
    results = []
    for _ in range(2):
        p = np.ones(3)
        opt = Adam([p], lr=1e-2)
        for _ in range(10):
            opt.step([p * 0.5 + 1.0])
        results.append(p.copy())
    np.testing.assert_array_equal(results[0], results[1])


def test_adam_shape_mismatch():
    p = np.zeros((2, 2))
    opt = Adam([p])
    with pytest.raises(ValueError):
        opt.step([np.zeros(3)])


def test_clip_grad_norm():
    g = [np.full(4, 3.0), np.full(9, 4.0)]
    total = clip_grad_norm(g, 1.0)
    assert total == pytest.approx(np.sqrt(4 * 9 + 9 * 16))
    new_norm = np.sqrt(sum(np.sum(x * x) for x in g))
    assert new_norm == pytest.approx(1.0)


def test_value_net_scalar_output():
    vn = ValueNet()
    out = vn.forward(np.zeros((7, 27)))
    assert out.shape == (7,)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    policy = GaussianPolicy(rng=rng)
    value = ValueNet(rng=rng)
    path = str(tmp_path / "ckpt.npz")
    save_checkpoint(path, policy, value, {"config_hash": "abc", "epoch": 3})
    p2, v2, meta = load_checkpoint(path)
    assert meta["config_hash"] == "abc" and meta["epoch"] == 3
    np.testing.assert_array_equal(p2.log_std, policy.log_std)
    for a, b in zip(p2.trunk.parameters(), policy.trunk.parameters()):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(v2.parameters(), value.parameters()):
        np.testing.assert_array_equal(a, b)


def test_checkpoint_version_guard(tmp_path):
    import json

    import peginhole.nn as nn_mod

    rng = np.random.default_rng(12)
    policy = GaussianPolicy(rng=rng)
    value = ValueNet(rng=rng)
    path = str(tmp_path / "ckpt.npz")
    orig = nn_mod.CHECKPOINT_VERSION
    try:
        nn_mod.CHECKPOINT_VERSION = 99
        save_checkpoint(path, policy, value, {})
    finally:
        nn_mod.CHECKPOINT_VERSION = orig
    with pytest.raises(ValueError):
        load_checkpoint(path)
