"""Forward kinematics of a UR10e-class 6-DOF arm via standard DH parameters.

The default model uses the publicly documented UR10e DH table with a
configurable flange-to-peg-tip offset. Batched FK over N joint
configurations is the hot path for the vectorized environment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .quatpose import Pose, quat_multiply, quat_rotate

# UR10e standard DH parameters (a, d, alpha), one row per joint.
UR10E_A = (0.0, -0.6127, -0.57155, 0.0, 0.0, 0.0)
UR10E_D = (0.1807, 0.0, 0.0, 0.17415, 0.11985, 0.11655)
UR10E_ALPHA = (np.pi / 2, 0.0, 0.0, np.pi / 2, -np.pi / 2, 0.0)

DEFAULT_PEG_LENGTH = 0.15  # m, along the flange z-axis
DEFAULT_JOINT_LIMIT = 2.0 * np.pi  # rad, symmetric per joint


@dataclass
class DHRow:
    a: float
    d: float
    alpha: float
    theta_offset: float = 0.0


@dataclass
class RobotModel:
    """Immutable 6-joint arm model: DH table, joint limits, tool offset."""

    dh: list = field(
        default_factory=lambda: [
            DHRow(a, d, alpha)
            for a, d, alpha in zip(UR10E_A, UR10E_D, UR10E_ALPHA)
        ]
    )
    joint_limits: np.ndarray = field(
        default_factory=lambda: np.tile(
            [-DEFAULT_JOINT_LIMIT, DEFAULT_JOINT_LIMIT], (6, 1)
        )
    )
    # Peg tip: translated along the flange z-axis and rotated 180 deg about
    # the flange y-axis, so a downward-pointing peg has near-identity
    # orientation in the base frame.
    tcp_offset: Pose = field(
        default_factory=lambda: Pose(
            position=np.array([0.0, 0.0, DEFAULT_PEG_LENGTH]),
            orientation=np.array([0.0, 0.0, 1.0, 0.0]),
        )
    )

    def __post_init__(self):
        if len(self.dh) != 6:
            raise ValueError(f"expected 6 DH rows, got {len(self.dh)}")
        self.joint_limits = np.asarray(self.joint_limits, dtype=np.float64)
        if self.joint_limits.shape != (6, 2):
            raise ValueError("joint_limits must be 6 (lower, upper) pairs")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ValueError("joint limits must satisfy lower < upper")
        # Precomputed per-joint constants for the batched FK path.
        self._a = np.array([r.a for r in self.dh])
        self._d = np.array([r.d for r in self.dh])
        self._offs = np.array([r.theta_offset for r in self.dh])
        alpha = np.array([r.alpha for r in self.dh])
        # qx(alpha) per joint, shape (6, 4)
        self._q_alpha = np.stack(
            [np.cos(alpha / 2), np.sin(alpha / 2), np.zeros(6), np.zeros(6)], axis=-1
        )

    def to_dict(self) -> dict:
        return {
            "dh": [[r.a, r.d, r.alpha, r.theta_offset] for r in self.dh],
            "joint_limits": self.joint_limits.tolist(),
            "tcp_offset": self.tcp_offset.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RobotModel":
        return cls(
            dh=[DHRow(*row) for row in d["dh"]],
            joint_limits=np.asarray(d["joint_limits"]),
            tcp_offset=Pose.from_dict(d["tcp_offset"]),
        )


def load_robot_model(path: str) -> RobotModel:
    with open(path) as f:
        return RobotModel.from_dict(json.load(f))


def clamp_joints(model: RobotModel, joints: np.ndarray) -> np.ndarray:
    """Clamp each joint (or batch of joints, shape (..., 6)) into its limits."""
    joints = np.asarray(joints, dtype=np.float64)
    return np.clip(joints, model.joint_limits[:, 0], model.joint_limits[:, 1])


def forward_kinematics_batch(model: RobotModel, joints: np.ndarray):
    """Peg-tip poses for a batch of joint configurations.

    joints: shape (N, 6). Returns (positions (N, 3), orientations (N, 4)).

    Each DH step Rz(theta)*Tz(d)*Tx(a)*Rx(alpha) is composed as a
    position+quaternion pair, avoiding matrix-to-quaternion conversion.
    """
    joints = np.atleast_2d(np.asarray(joints, dtype=np.float64))
    n = joints.shape[0]
    pos = np.zeros((n, 3))
    quat = np.zeros((n, 4))
    quat[:, 0] = 1.0
    for i in range(6):
        theta = joints[:, i] + model._offs[i]
        c, s = np.cos(theta), np.sin(theta)
        # Local transform: translation then rotation qz(theta) * qx(alpha).
        half = theta / 2.0
        qz = np.stack(
            [np.cos(half), np.zeros(n), np.zeros(n), np.sin(half)], axis=-1
        )
        q_local = quat_multiply(qz, model._q_alpha[i])
        p_local = np.stack(
            [model._a[i] * c, model._a[i] * s, np.full(n, model._d[i])], axis=-1
        )
        pos = pos + quat_rotate(quat, p_local)
        quat = quat_multiply(quat, q_local)
    pos = pos + quat_rotate(quat, model.tcp_offset.position)
    quat = quat_multiply(quat, model.tcp_offset.orientation)
    return pos, quat


def forward_kinematics(model: RobotModel, joints: np.ndarray) -> Pose:
    """Pose of the peg tip in the robot base frame for one configuration."""
    pos, quat = forward_kinematics_batch(model, np.asarray(joints)[None, :])
    return Pose(pos[0], quat[0])
