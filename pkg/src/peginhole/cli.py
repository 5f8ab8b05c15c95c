"""Command-line entry point.

Subcommands:
  train <config>                       run PPO training from a JSON config
  eval <checkpoint> <config> --episodes K   deterministic evaluation sweep
  replay <checkpoint> --pose ... --out F    export one trajectory for replay
  gradcheck                            finite-difference gradient audit

Exit codes: 0 success, 1 usage/config error, 2 runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import ppo
from .config import ConfigError, RunConfig, load_run_config, write_resolved_config
from .env import (
    ALIGN_THRESHOLD,
    INSERT_THRESHOLD,
    EnvConfig,
    VecEnv,
    compute_reward,
)
from .kinematics import forward_kinematics
from .nn import gradient_check, load_checkpoint
from .ppo import TrainingAbort
from .quatpose import Pose, quat_from_rpy
from .trajectory import TrajectoryFile, TrajectoryRow, write_trajectory

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peginhole",
        description="Peg-in-hole assembly policy: training, evaluation, replay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run PPO training from a JSON config")
    p_train.add_argument("config", help="path to the run config JSON")
    p_train.add_argument("--quiet", action="store_true", help="suppress progress")

    p_eval = sub.add_parser("eval", help="deterministic evaluation sweep")
    p_eval.add_argument("checkpoint", help="checkpoint file (.npz)")
    p_eval.add_argument("config", help="path to the run config JSON")
    p_eval.add_argument("--episodes", type=int, default=256)
    p_eval.add_argument(
        "--force", action="store_true",
        help="allow a checkpoint trained under a different config hash",
    )

    p_replay = sub.add_parser("replay", help="export one deterministic trajectory")
    p_replay.add_argument("checkpoint", help="checkpoint file (.npz)")
    p_replay.add_argument(
        "--pose", type=float, nargs=6, required=True,
        metavar=("X", "Y", "Z", "ROLL", "PITCH", "YAW"),
        help="hole pose: position in m, RPY in degrees, robot base frame",
    )
    p_replay.add_argument("--out", required=True, help="trajectory CSV path")

    sub.add_parser("gradcheck", help="finite-difference gradient audit")
    return parser


def _env_config_from_meta(meta: dict) -> RunConfig:
    from .config import parse_run_config

    return parse_run_config(meta["resolved_config"])


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    out_dir = os.path.join(cfg.output_dir, cfg.experiment)
    os.makedirs(out_dir, exist_ok=True)
    write_resolved_config(cfg, os.path.join(out_dir, "config_resolved.json"))

    model = cfg.robot_model()
    venv = VecEnv(model, cfg.env)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.env.seed, 0xF00D]))
    policy = ppo.GaussianPolicy(rng=rng)
    value_net = ppo.ValueNet(rng=rng)
    meta = {
        "config_hash": cfg.config_hash(),
        "resolved_config": cfg.resolved(),
        "experiment": cfg.experiment,
    }

    def log(m):
        if not args.quiet:
            print(
                f"epoch {m.epoch:4d}  reward {m.mean_reward:9.3f}  "
                f"success {m.success_pct:6.2f}%  dq {m.mean_dq:.4f}  "
                f"dp {m.mean_dp:.4f}",
                flush=True,
            )

    ppo.train(venv, policy, value_net, cfg.ppo, out_dir, meta, log=log)
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.episodes <= 0:
        raise ConfigError("--episodes must be positive")
    cfg = load_run_config(args.config)
    policy, _, meta = load_checkpoint(args.checkpoint)
    if meta.get("config_hash") != cfg.config_hash() and not args.force:
        raise ConfigError(
            "checkpoint was trained under a different config hash "
            f"({meta.get('config_hash')} != {cfg.config_hash()}); "
            "pass --force to evaluate anyway"
        )
    env_cfg = EnvConfig(
        n_envs=args.episodes,
        horizon=cfg.env.horizon,
        seed=cfg.env.seed + 1000003,  # fresh poses, still deterministic
        randomization=cfg.env.randomization,
        hole_base=cfg.env.hole_base,
        rate_limit=cfg.env.rate_limit,
        terminate_on_success=cfg.env.terminate_on_success,
    )
    venv = VecEnv(cfg.robot_model(), env_cfg)
    report = ppo.evaluate(venv, policy, env_cfg.horizon)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_replay(args) -> int:
    policy, _, meta = load_checkpoint(args.checkpoint)
    if "resolved_config" not in meta:
        raise ConfigError("checkpoint has no embedded config; cannot replay")
    cfg = _env_config_from_meta(meta)
    if cfg.config_hash() != meta.get("config_hash"):
        raise ConfigError("checkpoint config hash mismatch; refusing to replay")

    x, y, z, roll, pitch, yaw = args.pose
    rpy = np.deg2rad([roll, pitch, yaw])
    hole = Pose(np.array([x, y, z]), quat_from_rpy(*rpy))

    # Extrapolation warning when the pose leaves the trained ranges.
    bounds = cfg.env.randomization.bounds()
    base = cfg.env.hole_base
    offsets = np.concatenate([np.asarray([x, y, z]) - base.position, rpy])
    outside = (offsets < bounds[:, 0] - 1e-12) | (offsets > bounds[:, 1] + 1e-12)
    if np.any(outside):
        names = np.array(["x", "y", "z", "roll", "pitch", "yaw"])[outside]
        print(
            f"warning: pose outside the trained randomization range on "
            f"{', '.join(names)}; trajectory is an extrapolation",
            file=sys.stderr,
        )

    env_cfg = EnvConfig(
        n_envs=1,
        horizon=cfg.env.horizon,
        seed=cfg.env.seed,
        randomization=cfg.env.randomization,
        hole_base=cfg.env.hole_base,
        rate_limit=cfg.env.rate_limit,
        terminate_on_success=True,
    )
    model = cfg.robot_model()
    venv = VecEnv(model, env_cfg)
    venv.set_hole_pose(0, hole)

    rows = []
    final_dq, final_dp = np.inf, np.inf
    obs = venv.observe()
    for step in range(env_cfg.horizon):
        action = policy.mean_action(obs)
        result = venv.step(action)
        obs = result.obs
        peg = forward_kinematics(model, venv.joints[0])
        _, _, final_dq, final_dp = compute_reward(peg, hole)
        rows.append(
            TrajectoryRow(
                step=step,
                joints=venv.joints[0].copy(),
                peg_pose=peg,
                reward=float(result.reward[0]),
            )
        )
        if result.done[0]:
            break

    met = bool(final_dq < ALIGN_THRESHOLD and final_dp < INSERT_THRESHOLD)
    traj = TrajectoryFile(
        config_hash=meta["config_hash"],
        checkpoint_id=os.path.basename(args.checkpoint),
        hole_pose=hole,
        thresholds_met=met,
        final_dq=final_dq,
        final_dp=final_dp,
        rows=rows,
    )
    write_trajectory(traj, args.out)
    print(
        f"replay finished: {len(rows)} steps, d_q={final_dq:.5f} rad, "
        f"d_p={final_dp:.5f} m, insertion {'met' if met else 'NOT met'}"
    )
    return EXIT_OK if met else EXIT_RUNTIME


def cmd_gradcheck(_args) -> int:
    max_err, per_net, per_layer = gradient_check()
    for name in sorted(per_layer):
        print(f"layer {name}: max relative error {per_layer[name]:.3e}")
    print(f"overall max relative error over {len(per_net)} nets: {max_err:.3e}")
    ok = max_err <= 1e-6
    print("gradcheck PASS" if ok else "gradcheck FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingAbort, FloatingPointError) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
