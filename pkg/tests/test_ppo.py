"""PPO learner tests: rollout shapes, GAE vs a brute-force oracle, the
clipped surrogate at the old policy, and training-loop contracts."""

import itertools
import os

import numpy as np
import pytest

from peginhole.env import EnvConfig, RandomizationRange, VecEnv
from peginhole.kinematics import RobotModel
from peginhole.nn import GaussianPolicy, ValueNet, Adam, load_checkpoint
from peginhole.ppo import (
    METRICS_HEADER,
    PPOConfig,
    RolloutBuffer,
    collect_rollout,
    compute_gae,
    ppo_update,
    train,
)


@pytest.fixture(scope="module")
def model():
    return RobotModel()


def make_buffer(rng, n, t, terminals=None, mask=None):
    terminals = (
        np.zeros((n, t), dtype=bool) if terminals is None else terminals
    )
    mask = np.ones((n, t), dtype=bool) if mask is None else mask
    return RolloutBuffer(
        obs=rng.standard_normal((n, t, 27)),
        actions=rng.uniform(-1, 1, (n, t, 6)),
        log_probs_old=rng.standard_normal((n, t)),
        rewards=rng.standard_normal((n, t)),
        values=rng.standard_normal((n, t)),
        terminals=terminals,
        mask=mask,
        bootstrap_value=rng.standard_normal(n),
    )


def gae_oracle(rewards, values, terminals, bootstrap, gamma, lam):
    """Brute-force double loop: A_t = sum_l (gamma*lam)^l delta_{t+l},
    truncated at the first terminal step."""
    t = len(rewards)
    vals_next = np.append(values[1:], bootstrap)
    deltas = rewards + gamma * vals_next * (1.0 - terminals) - values
    adv = np.zeros(t)
    for start in range(t):
        acc = 0.0
        coef = 1.0
        for k in range(start, t):
            acc += coef * deltas[k]
            if terminals[k]:
                break
            coef *= gamma * lam
        adv[start] = acc
    return adv


def test_gae_lambda_zero_is_td_error():
    rng = np.random.default_rng(0)
    buf = make_buffer(rng, 3, 6)
    adv, _ = compute_gae(buf, gamma=0.97, lam=0.0)
    vals_next = np.concatenate(
        [buf.values[:, 1:], buf.bootstrap_value[:, None]], axis=1
    )
    delta = buf.rewards + 0.97 * vals_next - buf.values
    np.testing.assert_allclose(adv, delta, atol=1e-12)


def test_gae_undiscounted_sum():
    rng = np.random.default_rng(1)
    buf = make_buffer(rng, 2, 8)
    buf.values[...] = 0.0
    buf.bootstrap_value[...] = 0.0
    adv, ret = compute_gae(buf, gamma=1.0, lam=1.0)
    expected = np.cumsum(buf.rewards[:, ::-1], axis=1)[:, ::-1]
    np.testing.assert_allclose(adv, expected, atol=1e-12)
    np.testing.assert_allclose(ret, expected, atol=1e-12)


def test_gae_matches_oracle_random_buffer():
    rng = np.random.default_rng(2)
    buf = make_buffer(rng, 1, 8)
    adv, ret = compute_gae(buf, gamma=0.99, lam=0.95)
    oracle = gae_oracle(
        buf.rewards[0], buf.values[0], buf.terminals[0].astype(float),
        buf.bootstrap_value[0], 0.99, 0.95,
    )
    np.testing.assert_allclose(adv[0], oracle, atol=1e-12)
    np.testing.assert_allclose(ret[0], oracle + buf.values[0], atol=1e-12)


@pytest.mark.parametrize("t", [1, 2, 4, 8])
def test_gae_oracle_all_done_patterns(t):
    """Exhaustive terminal-flag patterns for short horizons."""
    rng = np.random.default_rng(3)
    for bits in itertools.product([False, True], repeat=t):
        terminals = np.array(bits, dtype=bool)[None, :]
        # After a terminal step the env is frozen: mask out later steps.
        mask = np.ones(t, dtype=bool)
        first = np.argmax(terminals[0]) if terminals.any() else t
        mask[first + 1:] = False
        buf = make_buffer(rng, 1, t, terminals=terminals,
                          mask=mask[None, :])
        adv, _ = compute_gae(buf, gamma=0.93, lam=0.9)
        oracle = gae_oracle(
            buf.rewards[0], buf.values[0], terminals[0].astype(float),
            buf.bootstrap_value[0], 0.93, 0.9,
        )
        live = mask
        assert np.max(np.abs(adv[0][live] - oracle[live])) <= 1e-12
        assert np.all(adv[0][~live] == 0.0)


def test_collect_rollout_shapes(model):
    cfg = EnvConfig(n_envs=4, horizon=6, seed=0)
    venv = VecEnv(model, cfg)
    rng = np.random.default_rng(4)
    policy = GaussianPolicy(rng=rng)
    value = ValueNet(rng=rng)
    buf = collect_rollout(venv, policy, value, 6, np.random.default_rng(5))
    assert buf.obs.shape == (4, 6, 27)
    assert buf.actions.shape == (4, 6, 6)
    for arr in (buf.log_probs_old, buf.rewards, buf.values, buf.terminals,
                buf.mask):
        assert arr.shape == (4, 6)
    assert buf.bootstrap_value.shape == (4,)


def test_collect_rollout_deterministic_policy_rows(model):
    cfg = EnvConfig(n_envs=2, horizon=5, seed=0)
    venv = VecEnv(model, cfg)
    rng = np.random.default_rng(6)
    policy = GaussianPolicy(rng=rng)
    policy.log_std[:] = -40.0  # effectively zero exploration noise
    for w in policy.trunk.weights:
        w[...] = 0.0
    for b in policy.trunk.biases:
        b[...] = 0.0
    value = ValueNet(rng=rng)
    buf = collect_rollout(venv, policy, value, 5, np.random.default_rng(7))
    np.testing.assert_allclose(buf.actions, 0.0, atol=1e-12)


def test_ppo_update_ratio_one_at_old_policy(model):
    """With theta = theta_old the ratio is 1, nothing clips, and the policy
    loss equals minus the mean normalized advantage."""
    rng = np.random.default_rng(8)
    cfg = EnvConfig(n_envs=4, horizon=8, seed=1)
    venv = VecEnv(model, cfg)
    policy = GaussianPolicy(rng=rng)
    value = ValueNet(rng=rng)
    buf = collect_rollout(venv, policy, value, 8, np.random.default_rng(9))
    adv, ret = compute_gae(buf, 0.99, 0.95)
    pcfg = PPOConfig(update_epochs=1, minibatch_size=4 * 8,
                     learning_rate=0.0)
    opt = Adam(policy.parameters() + value.parameters(), lr=0.0)
    losses = ppo_update(policy, value, buf, pcfg, opt, adv, ret,
                        np.random.default_rng(10))
    assert losses["clip_frac"] == 0.0
    # normalized advantages have mean 0, so the loss is ~0
    assert losses["policy_loss"] == pytest.approx(0.0, abs=1e-10)


def test_clip_behavior_scalar():
    """Hand-evaluated surrogate: A > 0, ratio 1.5, epsilon 0.2 -> the
    objective takes the clipped value 1.2*A."""
    a = 2.0
    ratio = 1.5
    eps = 0.2
    surrogate = min(ratio * a, np.clip(ratio, 1 - eps, 1 + eps) * a)
    assert surrogate == pytest.approx(1.2 * a)
    # negative advantage: min picks the unclipped branch
    a = -1.0
    surrogate = min(ratio * a, np.clip(ratio, 1 - eps, 1 + eps) * a)
    assert surrogate == pytest.approx(ratio * a)


def test_advantage_normalization_inside_update(model):
    rng = np.random.default_rng(11)
    buf = make_buffer(rng, 4, 8)
    adv = rng.standard_normal((4, 8)) * 7.0 + 3.0
    live = adv[buf.mask]
    normalized = (adv - live.mean()) / (live.std() + 1e-8)
    assert abs(normalized[buf.mask].mean()) <= 1e-10
    assert normalized[buf.mask].std() == pytest.approx(1.0, abs=1e-6)


def test_update_aborts_on_nonfinite(model):
    from peginhole.ppo import TrainingAbort

    rng = np.random.default_rng(12)
    cfg = EnvConfig(n_envs=2, horizon=4, seed=2)
    venv = VecEnv(model, cfg)
    policy = GaussianPolicy(rng=rng)
    value = ValueNet(rng=rng)
    buf = collect_rollout(venv, policy, value, 4, np.random.default_rng(13))
    adv, ret = compute_gae(buf, 0.99, 0.95)
    buf.log_probs_old[...] = np.nan
    pcfg = PPOConfig(update_epochs=1)
    opt = Adam(policy.parameters() + value.parameters())
    with pytest.raises(TrainingAbort):
        ppo_update(policy, value, buf, pcfg, opt, adv, ret,
                   np.random.default_rng(14))


def _quick_train(tmp_path, model, seed=3, epochs=2, sub="a"):
    cfg = EnvConfig(
        n_envs=8, horizon=8, seed=seed,
        randomization=RandomizationRange.single_axis("z"),
    )
    venv = VecEnv(model, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF00D]))
    policy = GaussianPolicy(rng=rng)
    value = ValueNet(rng=rng)
    pcfg = PPOConfig(total_epochs=epochs, update_epochs=2)
    out = str(tmp_path / sub)
    history = train(venv, policy, value, pcfg, out, {"config_hash": "t"})
    return out, history


def test_train_zero_epochs(tmp_path, model):
    out, history = _quick_train(tmp_path, model, epochs=0)
    assert history == []
    with open(os.path.join(out, "metrics.csv")) as f:
        lines = f.read().splitlines()
    assert lines == [METRICS_HEADER]
    assert os.path.exists(os.path.join(out, "checkpoint_last.npz"))


def test_train_metrics_deterministic(tmp_path, model):
    out1, _ = _quick_train(tmp_path, model, sub="a")
    out2, _ = _quick_train(tmp_path, model, sub="b")
    with open(os.path.join(out1, "metrics.csv"), "rb") as f:
        bytes1 = f.read()
    with open(os.path.join(out2, "metrics.csv"), "rb") as f:
        bytes2 = f.read()
    assert bytes1 == bytes2
    assert len(bytes1.splitlines()) == 3


def test_best_checkpoint_dominates_history(tmp_path, model):
    out, history = _quick_train(tmp_path, model, epochs=3, sub="c")
    _, _, meta = load_checkpoint(os.path.join(out, "checkpoint_best.npz"))
    assert meta["success_pct"] >= max(h.success_pct for h in history)
