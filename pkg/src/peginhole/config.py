"""Run configuration: a single JSON document with env / robot / ppo / output
blocks. Defaults are applied per field and the fully-resolved config is
echoed to disk so every run is self-describing."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .env import EnvConfig, RandomizationRange
from .kinematics import RobotModel, load_robot_model
from .ppo import PPOConfig
from .quatpose import Pose

OUTPUT_DIR_ENV_VAR = "PEGINHOLE_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass
class RunConfig:
    env: EnvConfig
    ppo: PPOConfig
    robot: str = "default"  # "default" or a robot-model JSON path
    output_dir: str = "runs/out"
    experiment: str = "run"

    def robot_model(self) -> RobotModel:
        if self.robot == "default":
            return RobotModel()
        return load_robot_model(self.robot)

    def resolved(self) -> dict:
        """Fully-resolved JSON-ready dict with every default made explicit."""
        return {
            "env": {
                "n_envs": self.env.n_envs,
                "horizon": self.env.horizon,
                "seed": self.env.seed,
                "randomization": self.env.randomization.to_dict(),
                "hole_base": self.env.hole_base.to_dict(),
                "rate_limit": self.env.rate_limit,
                "terminate_on_success": self.env.terminate_on_success,
            },
            "robot": self.robot,
            "ppo": self.ppo.to_dict(),
            "output": {"dir": self.output_dir, "experiment": self.experiment},
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing required field '{where}.{key}'")
    return block[key]


def parse_run_config(doc: dict) -> RunConfig:
    """Validate and resolve a raw config dict. The seed is mandatory (no
    wall-clock seeding); everything else has a default."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    env_block = doc.get("env", {})
    seed = _require(env_block, "seed", "env")
    if not isinstance(seed, int):
        raise ConfigError("'env.seed' must be an integer")

    rand = env_block.get("randomization", {})
    try:
        randomization = RandomizationRange.from_dict(rand)
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"invalid 'env.randomization': {e}") from e

    hole_base = env_block.get("hole_base")
    try:
        env_cfg = EnvConfig(
            n_envs=int(env_block.get("n_envs", 256)),
            horizon=int(env_block.get("horizon", 256)),
            seed=seed,
            randomization=randomization,
            hole_base=Pose.from_dict(hole_base) if hole_base else EnvConfig().hole_base,
            rate_limit=float(env_block.get("rate_limit", 0.05)),
            terminate_on_success=bool(env_block.get("terminate_on_success", True)),
        )
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid 'env' block: {e}") from e
    if env_cfg.n_envs < 1:
        raise ConfigError("'env.n_envs' must be >= 1")
    if env_cfg.horizon < 1:
        raise ConfigError("'env.horizon' must be >= 1")

    ppo_block = doc.get("ppo", {})
    try:
        ppo_cfg = PPOConfig(**{**PPOConfig().to_dict(), **ppo_block})
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid 'ppo' block: {e}") from e

    robot = doc.get("robot", "default")
    if robot != "default" and not os.path.exists(robot):
        raise ConfigError(f"robot model file not found: {robot}")

    output = doc.get("output", {})
    out_dir = os.environ.get(
        OUTPUT_DIR_ENV_VAR, output.get("dir", "runs/out")
    )
    return RunConfig(
        env=env_cfg,
        ppo=ppo_cfg,
        robot=robot,
        output_dir=out_dir,
        experiment=output.get("experiment", "run"),
    )


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config '{path}': {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config '{path}' is not valid JSON: {e}") from e
    return parse_run_config(doc)


def write_resolved_config(cfg: RunConfig, path: str):
    doc = cfg.resolved()
    doc["config_hash"] = cfg.config_hash()
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
