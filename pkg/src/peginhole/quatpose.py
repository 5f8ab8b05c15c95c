"""Quaternion and rigid-pose arithmetic.

Quaternions are numpy arrays in (w, x, y, z) order. All functions accept
either a single quaternion of shape (4,) or a batch of shape (..., 4) and
broadcast accordingly. Angles are radians, positions are meters, and all
math is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Vector-part norm below which the log map returns the zero vector.
LOG_EPS = 1e-12

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_canonicalize(q: np.ndarray) -> np.ndarray:
    """Flip sign so the scalar part is non-negative (double-cover choice)."""
    q = np.asarray(q, dtype=np.float64)
    return np.where(q[..., :1] < 0.0, -q, q)


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product, renormalized to unit length."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    out = np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )
    return quat_normalize(out)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_from_rpy(roll, pitch, yaw) -> np.ndarray:
    """Intrinsic X-Y-Z roll/pitch/yaw, composed as Rz(yaw)*Ry(pitch)*Rx(roll).

    Scalar inputs give a (4,) quaternion; array inputs broadcast to (..., 4).
    """
    roll = np.asarray(roll, dtype=np.float64)
    pitch = np.asarray(pitch, dtype=np.float64)
    yaw = np.asarray(yaw, dtype=np.float64)
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    # qz(yaw) * qy(pitch) * qx(roll)
    return np.stack(
        [
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        ],
        axis=-1,
    )


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by unit quaternion(s) q."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - z * w)
    m[..., 0, 2] = 2 * (x * z + y * w)
    m[..., 1, 0] = 2 * (x * y + z * w)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - x * w)
    m[..., 2, 0] = 2 * (x * z - y * w)
    m[..., 2, 1] = 2 * (y * z + x * w)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def quat_log(q: np.ndarray) -> np.ndarray:
    """Log map of a unit quaternion, canonicalized to w >= 0 first.

    Returns u/|u| * arccos(w); the norm of the result is half the rotation
    angle and lies in [0, pi/2]. Near the identity (|u| <= LOG_EPS) the zero
    vector is returned.
    """
    q = quat_canonicalize(np.asarray(q, dtype=np.float64))
    w = np.clip(q[..., 0], -1.0, 1.0)
    u = q[..., 1:]
    un = np.linalg.norm(u, axis=-1)
    safe = np.where(un > LOG_EPS, un, 1.0)
    scale = np.where(un > LOG_EPS, np.arccos(w) / safe, 0.0)
    return u * scale[..., None]


def orientation_distance(q_hole: np.ndarray, q_peg: np.ndarray) -> np.ndarray:
    """Geodesic orientation distance ||log(q_hole * conj(q_peg))|| in [0, pi/2]."""
    rel = quat_multiply(np.asarray(q_hole), quat_conjugate(np.asarray(q_peg)))
    return np.linalg.norm(quat_log(rel), axis=-1)


def position_distance(p_hole: np.ndarray, p_peg: np.ndarray) -> np.ndarray:
    p_hole = np.asarray(p_hole, dtype=np.float64)
    p_peg = np.asarray(p_peg, dtype=np.float64)
    return np.linalg.norm(p_hole - p_peg, axis=-1)


def pose_distance(d_q, d_p) -> np.ndarray:
    """Combined pose distance sqrt(d_q^2 + d_p^2)."""
    return np.sqrt(np.square(d_q) + np.square(d_p))


@dataclass
class Pose:
    """Rigid pose: position (m) plus unit-quaternion orientation (w, x, y, z)."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.orientation = quat_normalize(self.orientation)

    def compose(self, other: "Pose") -> "Pose":
        """This pose applied first, then `other` expressed in this frame."""
        return Pose(
            self.position + quat_rotate(self.orientation, other.position),
            quat_multiply(self.orientation, other.orientation),
        )

    def inverse(self) -> "Pose":
        q_inv = quat_conjugate(self.orientation)
        return Pose(-quat_rotate(q_inv, self.position), q_inv)

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "orientation": self.orientation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(np.asarray(d["position"]), np.asarray(d["orientation"]))
