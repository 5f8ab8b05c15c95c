"""PPO learner: rollout collection, GAE, clipped-surrogate updates, and the
epoch-structured training loop with best-checkpoint retention."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .env import VecEnv, success_percentage
from .nn import Adam, GaussianPolicy, ValueNet, clip_grad_norm, save_checkpoint

METRICS_HEADER = (
    "epoch,mean_reward,success_pct,mean_dq,mean_dp,policy_loss,value_loss,clip_frac"
)


class TrainingAbort(RuntimeError):
    """Raised when an update produces a non-finite loss."""


@dataclass
class PPOConfig:
    epsilon: float = 0.2  # clip range of the update ratio
    gamma: float = 0.99
    lam: float = 0.95
    update_epochs: int = 5
    minibatch_size: int = 0  # 0 = auto (buffer size / 16)
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    learning_rate: float = 1e-3
    total_epochs: int = 100
    # Exploration std schedule: log-linear from sigma_init to sigma_final
    # over sigma_anneal_epochs, then held. 0 epochs disables the schedule
    # and leaves log_std as a learned parameter.
    sigma_init: float = 0.3
    sigma_final: float = 0.05
    sigma_anneal_epochs: int = 150

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must be in (0, 1]")
        if self.sigma_anneal_epochs > 0 and not (
            0.0 < self.sigma_final <= self.sigma_init
        ):
            raise ValueError("need 0 < sigma_final <= sigma_init")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "lam": self.lam,
            "update_epochs": self.update_epochs,
            "minibatch_size": self.minibatch_size,
            "value_coef": self.value_coef,
            "entropy_coef": self.entropy_coef,
            "max_grad_norm": self.max_grad_norm,
            "learning_rate": self.learning_rate,
            "total_epochs": self.total_epochs,
            "sigma_init": self.sigma_init,
            "sigma_final": self.sigma_final,
            "sigma_anneal_epochs": self.sigma_anneal_epochs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PPOConfig":
        return cls(**d)


@dataclass
class RolloutBuffer:
    """One epoch of experience; every per-step array is laid out (N, T)."""

    obs: np.ndarray  # (N, T, 27)
    actions: np.ndarray  # (N, T, 6) pre-clamp Gaussian samples
    log_probs_old: np.ndarray  # (N, T)
    rewards: np.ndarray  # (N, T)
    values: np.ndarray  # (N, T)
    terminals: np.ndarray  # (N, T) bool, episode ended by insertion here
    mask: np.ndarray  # (N, T) bool, env was live at this step
    bootstrap_value: np.ndarray  # (N,) critic value of the final observation


@dataclass
class EpochMetrics:
    epoch: int
    mean_reward: float
    success_pct: float
    mean_dq: float
    mean_dp: float
    policy_loss: float
    value_loss: float
    clip_frac: float

    def csv_row(self) -> str:
        return (
            f"{self.epoch},{self.mean_reward:.6f},{self.success_pct:.6f},"
            f"{self.mean_dq:.6f},{self.mean_dp:.6f},{self.policy_loss:.6f},"
            f"{self.value_loss:.6f},{self.clip_frac:.6f}"
        )


def collect_rollout(venv: VecEnv, policy: GaussianPolicy, value_net: ValueNet,
                    horizon: int, rng: np.random.Generator) -> RolloutBuffer:
    """Roll the policy for up to `horizon` steps across all environments.

    Stops early once every environment has terminated; succeeded
    environments are masked for the remaining steps either way.
    """
    obs_l, act_l, logp_l, rew_l, val_l, term_l, mask_l = [], [], [], [], [], [], []
    obs = venv.observe()
    for _ in range(horizon):
        actions, raw, logp = policy.sample(obs, rng)
        values = value_net.forward(obs)
        result = venv.step(actions)
        obs_l.append(obs)
        act_l.append(raw)
        logp_l.append(logp)
        rew_l.append(result.reward)
        val_l.append(values)
        term_l.append(result.terminal)
        mask_l.append(result.active)
        obs = result.obs
        if np.all(venv.done):
            break
    bootstrap = value_net.forward(obs)
    return RolloutBuffer(
        obs=np.stack(obs_l, axis=1),
        actions=np.stack(act_l, axis=1),
        log_probs_old=np.stack(logp_l, axis=1),
        rewards=np.stack(rew_l, axis=1),
        values=np.stack(val_l, axis=1),
        terminals=np.stack(term_l, axis=1),
        mask=np.stack(mask_l, axis=1),
        bootstrap_value=bootstrap,
    )


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float):
    """Generalized advantage estimates and value targets.

    delta_t = r_t + gamma*V(s_{t+1})*(1-term_t) - V(s_t), accumulated
    backwards with factor gamma*lam*(1-term_t). Non-terminal tails bootstrap
    the critic's value of the final observation; terminal tails bootstrap 0.
    Masked (post-success) steps get zero advantage and return = value.
    """
    n, t = buffer.rewards.shape
    advantages = np.zeros((n, t))
    not_term = 1.0 - buffer.terminals.astype(np.float64)
    gae = np.zeros(n)
    next_value = buffer.bootstrap_value
    for k in range(t - 1, -1, -1):
        delta = (
            buffer.rewards[:, k]
            + gamma * next_value * not_term[:, k]
            - buffer.values[:, k]
        )
        gae = delta + gamma * lam * not_term[:, k] * gae
        advantages[:, k] = gae
        next_value = buffer.values[:, k]
    returns = advantages + buffer.values
    advantages = np.where(buffer.mask, advantages, 0.0)
    returns = np.where(buffer.mask, returns, buffer.values)
    return advantages, returns


def ppo_update(policy: GaussianPolicy, value_net: ValueNet, buffer: RolloutBuffer,
               config: PPOConfig, optimizer: Adam, advantages, returns,
               rng: np.random.Generator) -> dict:
    """Clipped-surrogate update over shuffled minibatches.

    Advantages are normalized over the live samples of the whole batch.
    Returns aggregate loss statistics.
    """
    n, t = buffer.rewards.shape
    m = n * t
    obs = buffer.obs.reshape(m, -1)
    actions = buffer.actions.reshape(m, -1)
    logp_old = buffer.log_probs_old.reshape(m)
    adv = advantages.reshape(m).copy()
    ret = returns.reshape(m)
    mask = buffer.mask.reshape(m).astype(np.float64)
    n_live = mask.sum()
    if n_live == 0:
        raise TrainingAbort("rollout contains no live samples")

    live_adv = adv[mask > 0]
    adv_std = live_adv.std()
    adv = (adv - live_adv.mean()) / (adv_std + 1e-8)
    adv *= mask

    mb_size = config.minibatch_size or max(1, m // 16)
    eps = config.epsilon

    pol_losses, val_losses, clip_fracs = [], [], []
    for _ in range(config.update_epochs):
        perm = rng.permutation(m)
        for start in range(0, m, mb_size):
            idx = perm[start:start + mb_size]
            w = mask[idx]
            n_act = w.sum()
            if n_act == 0:
                continue
            mb_obs = obs[idx]
            mb_act = actions[idx]
            mb_adv = adv[idx]

            mean = policy.trunk.forward(mb_obs)
            logp_new = policy._log_prob(mean, mb_act)
            ratio = np.exp(logp_new - logp_old[idx])
            unclipped = ratio * mb_adv
            clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * mb_adv
            pol_loss = -np.sum(np.minimum(unclipped, clipped) * w) / n_act

            v = value_net.forward(mb_obs)
            v_err = v - ret[idx]
            val_loss = np.sum(v_err * v_err * w) / n_act

            entropy = policy.entropy()
            total = (pol_loss + config.value_coef * val_loss
                     - config.entropy_coef * entropy)
            if not np.isfinite(total):
                raise TrainingAbort(
                    f"non-finite loss (policy={pol_loss}, value={val_loss})"
                )

            # Gradient of the surrogate flows only through the unclipped
            # branch when it attains the min; the clipped branch is constant.
            grad_coef = np.where(unclipped <= clipped, -mb_adv * ratio, 0.0)
            grad_coef = grad_coef * w / n_act
            d_mean, d_log_std = policy.log_prob_grads(mean, mb_act)

            policy.zero_grad()
            value_net.zero_grad()
            policy.trunk.backward(grad_coef[:, None] * d_mean)
            policy.log_std_grad += np.sum(grad_coef[:, None] * d_log_std, axis=0)
            policy.log_std_grad -= config.entropy_coef  # d(-c*entropy)/dlog_std
            value_net.backward(2.0 * config.value_coef * v_err * w / n_act)

            grads = policy.gradients() + value_net.gradients()
            clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(grads)
            policy.clamp_log_std()

            pol_losses.append(pol_loss)
            val_losses.append(val_loss)
            clip_fracs.append(
                float(np.sum((np.abs(ratio - 1.0) > eps) * w) / n_act)
            )

    return {
        "policy_loss": float(np.mean(pol_losses)),
        "value_loss": float(np.mean(val_losses)),
        "clip_frac": float(np.mean(clip_fracs)),
        "entropy": policy.entropy(),
    }


def evaluate(venv: VecEnv, policy: GaussianPolicy, horizon: int) -> dict:
    """Deterministic mean-action episodes over freshly randomized hole poses."""
    venv.reset_all()
    obs = venv.observe()
    for _ in range(horizon):
        actions = policy.mean_action(obs)
        result = venv.step(actions)
        obs = result.obs
        if np.all(venv.done | venv.succeeded):
            break
    n_succ = int(venv.succeeded.sum())
    return {
        "episodes": venv.n_envs,
        "n_success": n_succ,
        "success_pct": success_percentage(n_succ, venv.n_envs),
        "mean_dq": float(np.mean(venv.last_dq)),
        "mean_dp": float(np.mean(venv.last_dp)),
    }


def train(venv: VecEnv, policy: GaussianPolicy, value_net: ValueNet,
          config: PPOConfig, out_dir: str, meta: dict,
          log=None) -> list:
    """Epoch loop: reset all, collect, GAE, update, log; keeps the
    best-by-success checkpoint plus the latest one. Returns metric rows."""
    os.makedirs(out_dir, exist_ok=True)
    horizon = venv.config.horizon
    sample_rng = np.random.default_rng(
        np.random.SeedSequence([venv.config.seed, 0xA5])
    )
    shuffle_rng = np.random.default_rng(
        np.random.SeedSequence([venv.config.seed, 0x5A])
    )
    optimizer = Adam(
        policy.parameters() + value_net.parameters(), lr=config.learning_rate
    )
    metrics_path = os.path.join(out_dir, "metrics.csv")
    best_path = os.path.join(out_dir, "checkpoint_best.npz")
    last_path = os.path.join(out_dir, "checkpoint_last.npz")

    save_checkpoint(last_path, policy, value_net, {**meta, "epoch": -1})
    best_key = (-np.inf, -np.inf)
    history = []
    with open(metrics_path, "w") as f:
        f.write(METRICS_HEADER + "\n")
        for epoch in range(config.total_epochs):
            if config.sigma_anneal_epochs > 0:
                frac = min(1.0, epoch / config.sigma_anneal_epochs)
                policy.log_std[:] = (
                    (1.0 - frac) * np.log(config.sigma_init)
                    + frac * np.log(config.sigma_final)
                )
            venv.reset_all()
            buffer = collect_rollout(venv, policy, value_net, horizon, sample_rng)
            advantages, returns = compute_gae(buffer, config.gamma, config.lam)
            losses = ppo_update(policy, value_net, buffer, config, optimizer,
                                advantages, returns, shuffle_rng)
            n_succ = int(venv.succeeded.sum())
            metrics = EpochMetrics(
                epoch=epoch,
                mean_reward=float(buffer.rewards.sum(axis=1).mean()),
                success_pct=success_percentage(n_succ, venv.n_envs),
                mean_dq=float(np.mean(venv.last_dq)),
                mean_dp=float(np.mean(venv.last_dp)),
                policy_loss=losses["policy_loss"],
                value_loss=losses["value_loss"],
                clip_frac=losses["clip_frac"],
            )
            f.write(metrics.csv_row() + "\n")
            f.flush()
            history.append(metrics)
            save_checkpoint(
                last_path, policy, value_net,
                {**meta, "epoch": epoch, "success_pct": metrics.success_pct},
            )
            # success first, mean reward as the tie-break: once every env
            # succeeds, later checkpoints with deeper insertion still win
            if (metrics.success_pct, metrics.mean_reward) > best_key:
                best_key = (metrics.success_pct, metrics.mean_reward)
                save_checkpoint(
                    best_path, policy, value_net,
                    {**meta, "epoch": epoch, "success_pct": metrics.success_pct},
                )
            if log is not None:
                log(metrics)
    return history
