"""Peg-in-hole assembly policy learning: kinematic simulation, quaternion
pose rewards, PPO training, and deterministic trajectory export."""

from .env import EnvConfig, RandomizationRange, VecEnv, compute_reward
from .kinematics import RobotModel, forward_kinematics
from .nn import MLP, Adam, GaussianPolicy, ValueNet
from .ppo import PPOConfig, compute_gae
from .quatpose import (
    Pose,
    orientation_distance,
    pose_distance,
    position_distance,
    quat_from_rpy,
    quat_log,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "EnvConfig",
    "GaussianPolicy",
    "MLP",
    "PPOConfig",
    "Pose",
    "RandomizationRange",
    "RobotModel",
    "ValueNet",
    "VecEnv",
    "compute_gae",
    "compute_reward",
    "forward_kinematics",
    "orientation_distance",
    "pose_distance",
    "position_distance",
    "quat_from_rpy",
    "quat_log",
]
