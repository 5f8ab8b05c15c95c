"""Vectorized, domain-randomized peg-in-hole environment.

Each of the N environments holds a 6-joint arm state and a randomized hole
pose. Actions in [-1, 1] are per-joint velocity commands scaled by the rate
limit. The reward combines a dense tanh distance term with sparse alignment
and insertion bonuses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import RobotModel, clamp_joints, forward_kinematics_batch
from .quatpose import (
    Pose,
    orientation_distance,
    pose_distance,
    position_distance,
    quat_conjugate,
    quat_from_rpy,
    quat_log,
    quat_multiply,
)

# Sparse reward thresholds and magnitudes.
ALIGN_THRESHOLD = 0.05  # rad, orientation distance
INSERT_THRESHOLD = 0.003  # m, position distance
ALIGN_BONUS = 2.6
INSERT_BONUS = 10.0

# Initial joint configuration, degrees.
INITIAL_JOINTS_DEG = (67.5, -90.0, 90.0, -90.0, -90.0, 0.0)

# Default nominal hole pose in the robot base frame.
DEFAULT_HOLE_POSITION = (-0.13, -0.70, 0.20)

AXES = ("x", "y", "z", "roll", "pitch", "yaw")


@dataclass
class RandomizationRange:
    """Per-axis uniform hole-pose offset ranges with enable flags.

    Defaults are the full 6-DOF ranges: X +/-0.2 m, Y +/-0.26 m,
    Z [0, 0.16] m, RPY +/-25 deg.
    """

    x: tuple = (-0.2, 0.2)
    y: tuple = (-0.26, 0.26)
    z: tuple = (0.0, 0.16)
    roll: tuple = (-np.deg2rad(25.0), np.deg2rad(25.0))
    pitch: tuple = (-np.deg2rad(25.0), np.deg2rad(25.0))
    yaw: tuple = (-np.deg2rad(25.0), np.deg2rad(25.0))
    enabled: tuple = (True, True, True, True, True, True)

    def __post_init__(self):
        for name in AXES:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"range for {name} has min > max")
        if len(self.enabled) != 6:
            raise ValueError("enabled must have 6 flags")

    @classmethod
    def single_axis(cls, axis: str) -> "RandomizationRange":
        return cls(enabled=tuple(a == axis for a in AXES))

    def bounds(self) -> np.ndarray:
        """(6, 2) array of [min, max] rows, zeroed where disabled."""
        rows = [getattr(self, name) for name in AXES]
        b = np.asarray(rows, dtype=np.float64)
        b[~np.asarray(self.enabled, dtype=bool)] = 0.0
        return b

    def to_dict(self) -> dict:
        d = {name: list(getattr(self, name)) for name in AXES}
        d["enabled"] = list(self.enabled)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RandomizationRange":
        kwargs = {name: tuple(d[name]) for name in AXES if name in d}
        if "enabled" in d:
            kwargs["enabled"] = tuple(bool(v) for v in d["enabled"])
        return cls(**kwargs)


@dataclass
class EnvConfig:
    n_envs: int = 256
    horizon: int = 256
    seed: int = 0
    randomization: RandomizationRange = field(default_factory=RandomizationRange)
    hole_base: Pose = field(
        default_factory=lambda: Pose(position=np.array(DEFAULT_HOLE_POSITION))
    )
    rate_limit: float = 0.05  # rad per step per joint, scales the action
    # When True an environment freezes after insertion (zero reward, held
    # state); when False it keeps collecting reward while inserted.
    terminate_on_success: bool = True


def compute_reward(peg: Pose, hole: Pose):
    """Scalar reward terms for one peg/hole pose pair.

    Returns (r_dense, r_sparse, d_q, d_p) with
    r_dense = 1 - tanh(sqrt(d_q^2 + d_p^2)) and sparse tiers
    {10 inserted, 2.6 aligned, 0 otherwise}.
    """
    d_q = float(orientation_distance(hole.orientation, peg.orientation))
    d_p = float(position_distance(hole.position, peg.position))
    r_dense = 1.0 - np.tanh(pose_distance(d_q, d_p))
    if d_q < ALIGN_THRESHOLD and d_p < INSERT_THRESHOLD:
        r_sparse = INSERT_BONUS
    elif d_q < ALIGN_THRESHOLD:
        r_sparse = ALIGN_BONUS
    else:
        r_sparse = 0.0
    return float(r_dense), float(r_sparse), d_q, d_p


def compute_reward_batch(peg_pos, peg_quat, hole_pos, hole_quat):
    """Vectorized reward terms; all inputs shaped (N, ...)."""
    d_q = orientation_distance(hole_quat, peg_quat)
    d_p = position_distance(hole_pos, peg_pos)
    r_dense = 1.0 - np.tanh(pose_distance(d_q, d_p))
    aligned = d_q < ALIGN_THRESHOLD
    inserted = aligned & (d_p < INSERT_THRESHOLD)
    r_sparse = np.where(inserted, INSERT_BONUS, np.where(aligned, ALIGN_BONUS, 0.0))
    return r_dense, r_sparse, d_q, d_p


def randomize_hole_pose(rng: np.random.Generator, rand_range: RandomizationRange,
                        base: Pose) -> Pose:
    """Sample one hole pose: base composed with uniform per-axis offsets."""
    bounds = rand_range.bounds()
    draws = rng.uniform(size=6)  # always 6 draws so streams stay aligned
    offs = bounds[:, 0] + draws * (bounds[:, 1] - bounds[:, 0])
    pos = base.position + offs[:3]
    quat = quat_multiply(base.orientation, quat_from_rpy(offs[3], offs[4], offs[5]))
    return Pose(pos, quat)


def success_percentage(n_success: int, n_total: int) -> float:
    if n_total <= 0:
        raise ValueError("n_total must be positive")
    if not 0 <= n_success <= n_total:
        raise ValueError("n_success must be in [0, n_total]")
    return 100.0 * n_success / n_total


@dataclass
class StepBatch:
    """Results of one vectorized step (all arrays indexed by environment)."""

    obs: np.ndarray  # (N, 27)
    reward: np.ndarray  # (N,)
    done: np.ndarray  # (N,) bool, episode over (insertion or horizon)
    terminal: np.ndarray  # (N,) bool, inserted on this exact step
    active: np.ndarray  # (N,) bool, env was live when this step was taken
    d_q: np.ndarray
    d_p: np.ndarray
    r_dense: np.ndarray
    r_sparse: np.ndarray


class VecEnv:
    """N parallel kinematic peg-in-hole environments with shared model/config.

    Per-environment RNG streams are derived from (seed, env index), so the
    sampled hole poses are independent of scheduling and of N.
    """

    OBS_DIM = 27

    def __init__(self, model: RobotModel, config: EnvConfig):
        self.model = model
        self.config = config
        n = config.n_envs
        if n < 1:
            raise ValueError("n_envs must be >= 1")
        self.n_envs = n
        self.initial_joints = np.deg2rad(INITIAL_JOINTS_DEG)
        self._rngs = [
            np.random.default_rng(np.random.SeedSequence([config.seed, i]))
            for i in range(n)
        ]
        self.joints = np.tile(self.initial_joints, (n, 1))
        self.hole_pos = np.zeros((n, 3))
        self.hole_quat = np.zeros((n, 4))
        self.hole_quat[:, 0] = 1.0
        self.last_action = np.zeros((n, 6))
        self.step_count = np.zeros(n, dtype=np.int64)
        self.succeeded = np.zeros(n, dtype=bool)
        self.aligned = np.zeros(n, dtype=bool)
        self.done = np.zeros(n, dtype=bool)
        self.last_dq = np.zeros(n)
        self.last_dp = np.zeros(n)
        self._held_obs = np.zeros((n, self.OBS_DIM))
        self.reset_all()

    def observe(self, idx=None) -> np.ndarray:
        peg_pos, peg_quat = forward_kinematics_batch(self.model, self.joints)
        d_q = orientation_distance(self.hole_quat, peg_quat)
        d_p = position_distance(self.hole_pos, peg_pos)
        pos_err = self.hole_pos - peg_pos
        rot_err = quat_log(quat_multiply(self.hole_quat, quat_conjugate(peg_quat)))
        obs = np.concatenate(
            [
                self.joints - self.initial_joints,
                self.hole_pos,
                self.hole_quat,
                self.last_action,
                pos_err,
                rot_err,
                d_q[:, None],
                d_p[:, None],
            ],
            axis=1,
        )
        if idx is None:
            return obs
        return obs[idx]

    def reset(self, env_index: int) -> np.ndarray:
        """Reset one environment: initial joints, fresh hole pose, zero action."""
        if not 0 <= env_index < self.n_envs:
            raise IndexError(f"env_index {env_index} out of range")
        i = env_index
        pose = randomize_hole_pose(
            self._rngs[i], self.config.randomization, self.config.hole_base
        )
        self.joints[i] = self.initial_joints
        self.hole_pos[i] = pose.position
        self.hole_quat[i] = pose.orientation
        self.last_action[i] = 0.0
        self.step_count[i] = 0
        self.succeeded[i] = False
        self.aligned[i] = False
        self.done[i] = False
        self.last_dq[i] = np.inf
        self.last_dp[i] = np.inf
        obs = self.observe(i)
        self._held_obs[i] = obs
        return obs

    def set_hole_pose(self, env_index: int, pose: Pose):
        """Override one environment's hole pose (used by trajectory replay)."""
        self.hole_pos[env_index] = pose.position
        self.hole_quat[env_index] = pose.orientation
        self._held_obs[env_index] = self.observe(env_index)

    def reset_all(self) -> np.ndarray:
        for i in range(self.n_envs):
            self.reset(i)
        return self.observe()

    def apply_action(self, actions: np.ndarray) -> np.ndarray:
        """Joint update for a batch of actions in [-1, 1]: per-joint velocity
        commands scaled by the rate limit, then clamped to joint limits."""
        delta = actions * self.config.rate_limit
        return clamp_joints(self.model, self.joints + delta)

    def step(self, actions: np.ndarray) -> StepBatch:
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.n_envs, 6):
            raise ValueError(f"expected actions of shape ({self.n_envs}, 6)")
        actions = np.clip(actions, -1.0, 1.0)

        frozen = self.succeeded & self.config.terminate_on_success
        active = ~frozen

        new_joints = self.apply_action(actions)
        self.joints = np.where(active[:, None], new_joints, self.joints)
        self.last_action = np.where(active[:, None], actions, self.last_action)
        self.step_count = self.step_count + active.astype(np.int64)

        peg_pos, peg_quat = forward_kinematics_batch(self.model, self.joints)
        r_dense, r_sparse, d_q, d_p = compute_reward_batch(
            peg_pos, peg_quat, self.hole_pos, self.hole_quat
        )

        inserted = r_sparse == INSERT_BONUS
        self.aligned = np.where(active, d_q < ALIGN_THRESHOLD, self.aligned)
        self.last_dq = np.where(active, d_q, self.last_dq)
        self.last_dp = np.where(active, d_p, self.last_dp)
        self.succeeded = self.succeeded | (active & inserted)

        reward = np.where(active, r_dense + r_sparse, 0.0)
        if self.config.terminate_on_success:
            terminal = active & inserted
            done_now = terminal | (self.step_count >= self.config.horizon)
        else:
            terminal = np.zeros(self.n_envs, dtype=bool)
            done_now = self.step_count >= self.config.horizon
        self.done = self.done | done_now | frozen

        obs = np.where(active[:, None], self.observe(), self._held_obs)
        self._held_obs = obs
        return StepBatch(
            obs=obs,
            reward=reward,
            done=self.done.copy(),
            terminal=terminal,
            active=active,
            d_q=np.where(active, d_q, 0.0),
            d_p=np.where(active, d_p, 0.0),
            r_dense=np.where(active, r_dense, 0.0),
            r_sparse=np.where(active, r_sparse, 0.0),
        )
