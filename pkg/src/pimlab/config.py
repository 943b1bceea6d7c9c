"""Hierarchical run configuration with strict key checking.

A run config is a tree of dataclasses. It can be loaded from a YAML file
and overridden with dotted key paths (``trainer.iterations=10``). Unknown
keys anywhere are errors, and the fully resolved config is serializable
back to a plain dict for run metadata.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised for unknown keys or malformed values in a run config."""


@dataclass
class TerrainConfig:
    kind: str = "flat"
    level: float = 0.0
    seed: int = 0
    # level-0 -> level-1 anchors per kind
    stair_height_range: tuple = (0.05, 0.15)
    tread_depth: float = 0.30
    slope_angle_range: tuple = (0.0872664625997165, 0.2617993877991494)  # 5 deg -> 15 deg
    platform_height_range: tuple = (0.10, 0.40)
    gap_width_range: tuple = (0.10, 0.40)
    roughness_amplitude_range: tuple = (0.0, 0.05)
    roughness_period: float = 0.5
    feature_start_x: float = 1.0
    extent: tuple = (-3.0, 9.0, -4.0, 4.0)  # x_min, x_max, y_min, y_max
    fill_value: float = 0.0


@dataclass
class ElevmapConfig:
    resolution: float = 0.05
    size_m: float = 4.0
    measurement_noise: float = 0.01
    ground_band: tuple = (-1.5, 0.5)  # relative to base z, in map frame
    recenter_fraction: float = 1.0 / 3.0


@dataclass
class RobotConfig:
    torso_mass: float = 30.0
    torso_inertia: tuple = (1.2, 1.5, 0.8)  # diagonal, body frame
    hip_offset_y: float = 0.16
    hip_offset_z: float = -0.05
    thigh_length: float = 0.45
    shank_length: float = 0.45
    sole_offset: float = 0.05  # ankle pivot to sole
    foot_half_length: float = 0.2
    foot_half_width: float = 0.08
    reflected_inertia: float = 0.12
    kp_leg: float = 60.0
    kd_leg: float = 12.0
    kp_arm: float = 20.0
    kd_arm: float = 1.0
    kp_waist: float = 40.0
    kd_waist: float = 2.0
    torque_limit: float = 120.0
    velocity_limit: float = 12.0
    default_hip_pitch: float = -0.2
    default_knee_pitch: float = 0.4
    default_ankle_pitch: float = -0.2
    leg_action_range: float = 0.6
    arm_action_range: float = 0.5
    waist_action_range: float = 0.5


@dataclass
class EnvConfig:
    physics_dt: float = 0.005
    substeps: int = 4  # control at 50 Hz
    contact_stiffness: float = 5000.0
    contact_damping: float = 50.0
    tangential_damping: float = 200.0
    friction_coeff: float = 0.8
    tilt_limit: float = 1.0
    height_fraction_limit: float = 0.3
    horizon: int = 500
    spawn_jitter: float = 0.01
    finish_x: float = 6.0


@dataclass
class CommandConfig:
    vx_range: tuple = (-0.4, 0.8)
    vy_range: tuple = (-0.2, 0.2)
    yaw_rate_range: tuple = (-0.5, 0.5)


@dataclass
class ObserveConfig:
    history: int = 5
    noise_joint_pos: float = 0.01
    noise_joint_vel: float = 0.1
    noise_ang_vel: float = 0.05
    noise_gravity: float = 0.02


@dataclass
class RewardConfig:
    tracking_sigma: float = 0.25
    d_min: float = 0.20
    contact_force_threshold: float = 350.0
    target_height: float = 0.95
    swing_apex: float = 0.10
    power_denominator_floor: float = 0.04
    soft_limit_fraction: float = 0.95
    # clip the per-step weighted total at zero so early termination is
    # never preferable to surviving (per-term breakdown stays unclipped)
    only_positive_total: bool = True
    # weights in canonical table order
    w_lin_velocity_tracking: float = 1.0
    w_ang_velocity_tracking: float = 1.0
    w_lin_velocity_z: float = -0.5
    w_ang_velocity_xy: float = -0.025
    w_orientation: float = -1.25
    w_joint_accelerations: float = -2.5e-7
    w_joint_power: float = -2.5e-5
    w_body_height: float = 0.1
    w_feet_clearance: float = -0.25
    w_action_rate: float = -0.01
    w_smoothness: float = -0.01
    w_feet_stumble: float = -3.0
    w_torques: float = -2.5e-6
    w_joint_velocity: float = -1.0e-4
    w_joint_tracking_error: float = -0.25
    w_arm_joint_deviation: float = -0.1
    w_hip_joint_deviation: float = -0.5
    w_waist_joint_deviation: float = -0.25
    w_joint_pos_limits: float = -2.0
    w_joint_vel_limits: float = -0.1
    w_torque_limits: float = -0.1
    w_no_fly: float = 0.25
    w_feet_lateral_distance: float = 2.5
    w_feet_slip: float = -0.25
    w_feet_ground_parallel: float = -2.0
    w_feet_contact_force: float = -2.5e-4
    w_feet_parallel: float = -2.5
    w_contact_momentum: float = -2.5e-4


@dataclass
class EstimatorConfig:
    variant: str = "pim"  # pim | him
    latent_dim: int = 16
    num_prototypes: int = 32
    temperature: float = 0.1
    sinkhorn_iterations: int = 3
    sinkhorn_epsilon: float = 2.0
    contrastive_weight: float = 1.0
    perc_features: int = 16
    encoder_widths: tuple = (256, 128)
    learning_rate: float = 1.0e-3
    epochs: int = 2
    batch_size: int = 128


@dataclass
class TrainerConfig:
    num_envs: int = 16
    iterations: int = 500
    steps_per_env: int = 48
    seed: int = 0
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    learning_rate: float = 1.0e-3
    lr_max: float = 1.0e-3
    max_grad_norm: float = 1.0
    desired_kl: float = 0.02
    entropy_coef: float = 0.0
    symmetry_weight_policy: float = 1.0
    symmetry_weight_value: float = 0.5
    init_action_std: float = 0.1
    policy_widths: tuple = (512, 256, 128)
    value_widths: tuple = (512, 256, 128)
    curriculum_fraction: float = 0.25
    terrain_kinds: tuple = ("flat",)
    terrain_step: float = 0.1
    checkpoint_every: int = 100


@dataclass
class RunConfig:
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    elevmap: ElevmapConfig = field(default_factory=ElevmapConfig)
    robot: RobotConfig = field(default_factory=RobotConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    commands: CommandConfig = field(default_factory=CommandConfig)
    observe: ObserveConfig = field(default_factory=ObserveConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)


def _merge(obj: Any, data: dict, path: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping at '{path or '<root>'}', got {type(data).__name__}")
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown config key '{where}'")
        current = getattr(obj, key)
        if is_dataclass(current):
            _merge(current, value, where)
        else:
            if isinstance(current, tuple) and isinstance(value, list):
                value = tuple(value)
            setattr(obj, key, value)
    return obj


def load_config(path: str | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Resolve defaults + optional YAML file + dotted-key overrides."""
    cfg = RunConfig()
    if path is not None:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        _merge(cfg, data, "")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key.path=value")
        dotted, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node = _nest(dotted.strip(), value)
        _merge(cfg, node, "")
    return cfg


def _nest(dotted: str, value: Any) -> dict:
    out: dict = {}
    cursor = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        cursor[part] = {}
        cursor = cursor[part]
    cursor[parts[-1]] = value
    return out


def to_dict(cfg: Any) -> dict:
    """Plain-dict view of a config tree, suitable for YAML echo."""
    out = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if is_dataclass(value):
            out[f.name] = to_dict(value)
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        else:
            out[f.name] = value
    return out


def dump_config(cfg: Any, path: str) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(to_dict(cfg), f, sort_keys=False)


def copy_config(cfg: RunConfig) -> RunConfig:
    fresh = RunConfig()
    _merge(fresh, to_dict(cfg), "")
    return fresh


__all__ = [
    "ConfigError",
    "RunConfig",
    "TerrainConfig",
    "ElevmapConfig",
    "RobotConfig",
    "EnvConfig",
    "CommandConfig",
    "ObserveConfig",
    "RewardConfig",
    "EstimatorConfig",
    "TrainerConfig",
    "load_config",
    "to_dict",
    "dump_config",
    "copy_config",
]

# keep dataclasses import referenced for consumers doing replace()
_ = dataclasses.replace
