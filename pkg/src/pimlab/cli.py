"""Command-line driver.

Subcommands: train, eval, compare, gen-terrain, replay-mapping. Each run
gets a self-describing directory with the resolved config, so a run can
be reproduced bit-identically from its artifacts on the same machine.

Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime/NaN abort.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import os
import sys

import numpy as np

from . import terrain as terrain_mod
from .config import ConfigError, RunConfig, copy_config, dump_config, load_config
from .elevmap import ElevationMap, MapFrame, PointCloudScan, ScanError
from .env import SimulationError, quat_to_mat
from .estimator import VEL_DIM
from .observe import HistoryBuffer, assemble
from .sampling import BasePose
from .scanlog import ScanLogError, read_scan_log
from .trainer import Trainer, base_pose_of, compare_him_pim, write_metrics

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _run_dir(base: str | None, tag: str) -> str:
    if base:
        return base
    stamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S")
    return os.path.join("runs", f"{stamp}_{tag}")


def _load(args) -> RunConfig:
    return load_config(getattr(args, "config", None), getattr(args, "set", None) or [])


# -- train -----------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _load(args)
    out = _run_dir(args.out, "train")
    trainer = Trainer(cfg, out)
    trainer.train(progress=not args.quiet)
    print(f"run artifacts in {out}")
    return EXIT_OK


# -- eval ------------------------------------------------------------------

def _synthetic_scan(field, base_pose: BasePose) -> PointCloudScan:
    """Oracle-generated scan densely covering the lattice footprint."""
    pts = base_pose.lattice_world_xy()
    # 3x3 stencil per lattice point so every interpolation corner gets hit
    offs = np.array([(dx, dy) for dx in (-0.05, 0.0, 0.05) for dy in (-0.05, 0.0, 0.05)])
    xy = (pts[:, None, :] + offs[None, :, :]).reshape(-1, 2)
    z, valid = terrain_mod.heights(field, xy[:, 0], xy[:, 1])
    xyz = np.column_stack([xy[valid], z[valid]])
    return PointCloudScan(points=xyz, sensor_pose=(np.zeros(3), np.eye(3)))


def run_eval(cfg: RunConfig, checkpoint: str, episodes: int, perception: str, seed: int = 0) -> list[dict]:
    trainer = Trainer(cfg, None)
    trainer.load_checkpoint(checkpoint)
    env = trainer.envs[0]
    env.set_action_scales(1.0, 1.0)
    rows = []
    for ep in range(episodes):
        ep_seed = seed + ep
        rng = np.random.default_rng(ep_seed)
        field = terrain_mod.generate_terrain(cfg.terrain.kind, cfg.terrain.level, cfg.terrain.seed + ep, cfg.terrain)
        command = np.array(
            [rng.uniform(*cfg.commands.vx_range), rng.uniform(*cfg.commands.vy_range), rng.uniform(*cfg.commands.yaw_rate_range)]
        )
        state = env.reset(field, command, seed=ep_seed)
        emap = None
        if perception == "elevmap":
            emap = ElevationMap(MapFrame(origin=np.zeros(3), rotation=np.eye(3)), cfg.elevmap)
        history = HistoryBuffer(cfg.observe.history)
        tracking = []
        success = False
        status = "timed_out"
        first = True
        while True:
            pose = base_pose_of(state)
            if emap is not None:
                emap.integrate_scan(_synthetic_scan(field, pose), state.base_pos)
                sample = emap.sample_elevation(pose)
            else:
                sample = terrain_mod.ground_truth_sample(field, pose)
            frame = assemble(state, command, sample)
            if first:
                history.reset(frame.obs_n)
                first = False
            else:
                history.push(frame.obs_n)
            variant_perc = frame.obs_p if trainer.estimator.variant == "pim" else None
            est_v, est_l = trainer.estimator.encode(history.flat()[None, :], None if variant_perc is None else variant_perc[None, :])
            on_s, op_s = trainer._net_obs(frame.obs_n, frame.obs_p)
            policy_in = np.concatenate([on_s, op_s, est_v[0], est_l[0]])
            action = trainer.policy.forward(policy_in, cache=False)
            state = env.step(state, action, field)
            v_body = state.lin_vel_body
            err = command[:2] - v_body[:2]
            tracking.append(float(np.exp(-(err @ err) / cfg.rewards.tracking_sigma)))
            if state.base_pos[0] >= cfg.env.finish_x:
                success = True
                status = "finished"
                break
            status = env.termination(state)
            if status != "alive":
                break
        rows.append(
            {
                "episode": ep,
                "seed": ep_seed,
                "success": int(success),
                "status": status,
                "steps": state.step_index,
                "mean_tracking_reward": float(np.mean(tracking)) if tracking else 0.0,
            }
        )
    return rows


def cmd_eval(args) -> int:
    cfg = _load(args)
    out = _run_dir(args.out, "eval")
    os.makedirs(out, exist_ok=True)
    dump_config(cfg, os.path.join(out, "config.yaml"))
    rows = run_eval(cfg, args.checkpoint, args.episodes, args.perception, seed=args.seed)
    path = os.path.join(out, "report.csv")
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["episode", "seed", "success", "status", "steps", "mean_tracking_reward"]
        )
        writer.writeheader()
        writer.writerows(rows)
    if rows:
        rate = float(np.mean([r["success"] for r in rows]))
        track = float(np.mean([r["mean_tracking_reward"] for r in rows]))
        print(f"episodes {len(rows)}  success rate {rate:.2f}  mean tracking {track:.3f}")
    else:
        print("episodes 0")
    print(f"report: {path}")
    return EXIT_OK


# -- compare ---------------------------------------------------------------

def cmd_compare(args) -> int:
    cfg = _load(args)
    out = _run_dir(args.out, "compare")
    path = compare_him_pim(copy_config(cfg), out, progress=not args.quiet)
    print(f"comparison: {path}")
    return EXIT_OK


# -- gen-terrain -----------------------------------------------------------

def cmd_gen_terrain(args) -> int:
    cfg = _load(args)
    field = terrain_mod.generate_terrain(args.kind or cfg.terrain.kind, args.level, args.seed, cfg.terrain)
    n = terrain_mod.dump_height_grid(field, args.pitch, args.out)
    print(f"wrote {n} rows to {args.out}")
    return EXIT_OK


# -- replay-mapping --------------------------------------------------------

def cmd_replay_mapping(args) -> int:
    cfg = _load(args)
    records = read_scan_log(args.log)
    out = _run_dir(args.out, "replay")
    os.makedirs(out, exist_ok=True)
    emap = ElevationMap(MapFrame(origin=np.zeros(3), rotation=np.eye(3)), cfg.elevmap)
    lattice_path = os.path.join(out, "lattice_samples.csv")
    with open(lattice_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["record", "timestamp"] + [f"h{i}" for i in range(96)])
        for i, (timestamp, pose, points) in enumerate(records):
            pos = pose[:3]
            quat = pose[3:7]
            norm = np.linalg.norm(quat)
            if norm < 1e-9:
                raise ScanLogError(f"zero quaternion in record {i}")
            rot = quat_to_mat(quat / norm)
            scan = PointCloudScan(points=points, sensor_pose=(pos, rot), timestamp=timestamp)
            emap.integrate_scan(scan, pos)
            yaw = float(np.arctan2(rot[1, 0], rot[0, 0]))
            sample = emap.sample_elevation(BasePose(position=tuple(pos), yaw=yaw))
            writer.writerow([i, timestamp] + [f"{h:.6f}" for h in sample.heights])
    map_path = os.path.join(out, "map_dump.csv")
    emap.dump(map_path)
    print(f"replayed {len(records)} scans; map dump: {map_path}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pimlab", description="perceptive locomotion lab")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-key override")
        p.add_argument("--out", help="output directory (default: timestamped under runs/)")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("train", help="run a training experiment")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--perception", choices=("gt", "elevmap"), default="gt")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="perceptive-vs-blind estimator comparison")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-terrain", help="dump a dense terrain height grid")
    common(p)
    p.add_argument("--kind", help="terrain kind (default from config)")
    p.add_argument("--level", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pitch", type=float, default=0.05)
    p.set_defaults(func=cmd_gen_terrain)

    p = sub.add_parser("replay-mapping", help="replay a scan log through the elevation map")
    common(p)
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay_mapping)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        if getattr(args, "config", None) and exc.filename == args.config:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ScanLogError, ScanError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SimulationError, FloatingPointError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
