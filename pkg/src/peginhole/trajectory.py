"""Trajectory export for offline robot replay.

A trajectory is a CSV body (one row per control step) plus a JSON metadata
sidecar (<out>.meta.json) so the CSV stays consumable by plain robot-side
replay tooling.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .quatpose import Pose

CSV_COLUMNS = [
    "step",
    "q1", "q2", "q3", "q4", "q5", "q6",
    "peg_x", "peg_y", "peg_z",
    "peg_qw", "peg_qx", "peg_qy", "peg_qz",
    "reward",
]


@dataclass
class TrajectoryRow:
    step: int
    joints: np.ndarray  # (6,) rad
    peg_pose: Pose
    reward: float


@dataclass
class TrajectoryFile:
    config_hash: str
    checkpoint_id: str
    hole_pose: Pose
    thresholds_met: bool
    final_dq: float
    final_dp: float
    rows: list = field(default_factory=list)

    def metadata(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "checkpoint_id": self.checkpoint_id,
            "hole_pose": self.hole_pose.to_dict(),
            "thresholds_met": self.thresholds_met,
            "final_dq": self.final_dq,
            "final_dp": self.final_dp,
            "n_rows": len(self.rows),
        }


def meta_path(csv_path: str) -> str:
    return csv_path + ".meta.json"


def write_trajectory(traj: TrajectoryFile, csv_path: str):
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for row in traj.rows:
            writer.writerow(
                [row.step]
                + [f"{v:.12g}" for v in row.joints]
                + [f"{v:.12g}" for v in row.peg_pose.position]
                + [f"{v:.12g}" for v in row.peg_pose.orientation]
                + [f"{row.reward:.12g}"]
            )
    with open(meta_path(csv_path), "w") as f:
        json.dump(traj.metadata(), f, indent=2, sort_keys=True)
        f.write("\n")


def read_trajectory(csv_path: str) -> TrajectoryFile:
    with open(meta_path(csv_path)) as f:
        meta = json.load(f)
    rows = []
    with open(csv_path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"unexpected trajectory columns: {reader.fieldnames}")
        for rec in reader:
            rows.append(
                TrajectoryRow(
                    step=int(rec["step"]),
                    joints=np.array([float(rec[f"q{i}"]) for i in range(1, 7)]),
                    peg_pose=Pose(
                        np.array([float(rec[k]) for k in
                                  ("peg_x", "peg_y", "peg_z")]),
                        np.array([float(rec[k]) for k in
                                  ("peg_qw", "peg_qx", "peg_qy", "peg_qz")]),
                    ),
                    reward=float(rec["reward"]),
                )
            )
    traj = TrajectoryFile(
        config_hash=meta["config_hash"],
        checkpoint_id=meta["checkpoint_id"],
        hole_pose=Pose.from_dict(meta["hole_pose"]),
        thresholds_met=bool(meta["thresholds_met"]),
        final_dq=float(meta["final_dq"]),
        final_dp=float(meta["final_dp"]),
        rows=rows,
    )
    if meta.get("n_rows") != len(rows):
        raise ValueError("trajectory row count does not match metadata")
    return traj
