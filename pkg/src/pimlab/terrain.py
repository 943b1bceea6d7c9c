"""Parameterized analytic terrains with exact height queries.

Each terrain kind is a deterministic, piecewise-analytic height function
over a rectangular extent. Geometry parameters interpolate linearly
between per-kind anchors as the difficulty level goes 0 -> 1. The same
functions serve as the simulation ground and as the ground-truth
perception oracle.

Conventions: the approach region (x < 0 for stairs/slopes, x below the
feature start for gaps/platforms) is flat at z = 0; the robot walks in +x.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import TerrainConfig
from .sampling import BasePose, ElevationSample


class OutOfExtentError(ValueError):
    """A height query fell outside the terrain extent."""


class TerrainKind(str, Enum):
    FLAT = "flat"
    ROUGH = "rough"
    SLOPE = "slope"
    STAIRS_UP = "stairs_up"
    STAIRS_DOWN = "stairs_down"
    GAP = "gap"
    PLATFORM = "platform"


@dataclass(frozen=True)
class TerrainParams:
    step_height: float = 0.0
    tread_depth: float = 0.30
    gap_width: float = 0.0
    platform_height: float = 0.0
    slope_angle: float = 0.0
    roughness_amplitude: float = 0.0
    roughness_period: float = 0.5
    feature_start_x: float = 1.0
    gap_depth: float = 1.0
    platform_length: float = 2.0


@dataclass(frozen=True)
class TerrainField:
    kind: TerrainKind
    level: float
    seed: int
    params: TerrainParams
    extent: tuple  # (x_min, x_max, y_min, y_max)
    fill_value: float = 0.0

    def contains(self, x, y):
        x_min, x_max, y_min, y_max = self.extent
        return (x >= x_min) & (x <= x_max) & (y >= y_min) & (y <= y_max)


def _lerp(lo: float, hi: float, t: float) -> float:
    return lo + (hi - lo) * t


def generate_terrain(
    kind: TerrainKind | str,
    level: float,
    seed: int,
    cfg: TerrainConfig | None = None,
) -> TerrainField:
    """Build a terrain whose challenge parameters scale with ``level``."""
    cfg = cfg or TerrainConfig()
    kind = TerrainKind(kind)
    if not (0.0 <= level <= 1.0):
        raise ValueError(f"terrain level must be in [0, 1], got {level}")
    params = TerrainParams(
        step_height=_lerp(*cfg.stair_height_range, level),
        tread_depth=cfg.tread_depth,
        gap_width=_lerp(*cfg.gap_width_range, level),
        platform_height=_lerp(*cfg.platform_height_range, level),
        slope_angle=_lerp(*cfg.slope_angle_range, level),
        roughness_amplitude=_lerp(*cfg.roughness_amplitude_range, level),
        roughness_period=cfg.roughness_period,
        feature_start_x=cfg.feature_start_x,
    )
    return TerrainField(
        kind=kind,
        level=float(level),
        seed=int(seed),
        params=params,
        extent=tuple(cfg.extent),
        fill_value=cfg.fill_value,
    )


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic lattice hash -> [0, 1). splitmix64-style mixing."""
    with np.errstate(over="ignore"):  # modular uint64 arithmetic is intended
        h = ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        h ^= iy.astype(np.uint64) * np.uint64(0xBF58476D1CE4E5B9)
        h ^= np.uint64((seed & 0xFFFFFFFFFFFFFFFF) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF)
        h ^= h >> np.uint64(30)
        h *= np.uint64(0xBF58476D1CE4E5B9)
        h ^= h >> np.uint64(27)
        h *= np.uint64(0x94D049BB133111EB)
        h ^= h >> np.uint64(31)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _value_noise(x: np.ndarray, y: np.ndarray, period: float, seed: int) -> np.ndarray:
    """Smooth value noise in [-1, 1] with the given spatial period."""
    u = x / period
    v = y / period
    iu = np.floor(u).astype(np.int64)
    iv = np.floor(v).astype(np.int64)
    fu = u - iu
    fv = v - iv
    # smoothstep weights
    wu = fu * fu * (3.0 - 2.0 * fu)
    wv = fv * fv * (3.0 - 2.0 * fv)
    n00 = _hash01(iu, iv, seed)
    n10 = _hash01(iu + 1, iv, seed)
    n01 = _hash01(iu, iv + 1, seed)
    n11 = _hash01(iu + 1, iv + 1, seed)
    top = n00 + (n10 - n00) * wu
    bot = n01 + (n11 - n01) * wu
    return 2.0 * (top + (bot - top) * wv) - 1.0


def _raw_heights(field: TerrainField, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    p = field.params
    kind = field.kind
    if kind is TerrainKind.FLAT:
        return np.zeros_like(x)
    if kind is TerrainKind.ROUGH:
        return p.roughness_amplitude * _value_noise(x, y, p.roughness_period, field.seed)
    if kind is TerrainKind.SLOPE:
        return np.where(x > 0.0, np.tan(p.slope_angle) * x, 0.0)
    if kind is TerrainKind.STAIRS_UP:
        steps = np.floor(np.maximum(x, 0.0) / p.tread_depth)
        return np.where(x > 0.0, p.step_height * steps, 0.0)
    if kind is TerrainKind.STAIRS_DOWN:
        steps = np.floor(np.maximum(x, 0.0) / p.tread_depth)
        return np.where(x > 0.0, -p.step_height * steps, 0.0)
    if kind is TerrainKind.GAP:
        x0 = p.feature_start_x
        in_gap = (x >= x0) & (x < x0 + p.gap_width)
        return np.where(in_gap, -p.gap_depth, 0.0)
    if kind is TerrainKind.PLATFORM:
        x0 = p.feature_start_x
        on_top = (x >= x0) & (x < x0 + p.platform_length)
        return np.where(on_top, p.platform_height, 0.0)
    raise ValueError(f"unhandled terrain kind {kind}")


def heights(field: TerrainField, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized heights plus an in-extent validity mask."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    valid = field.contains(x, y)
    z = _raw_heights(field, x, y)
    return z, valid


def height_at(field: TerrainField, x: float, y: float) -> float:
    """Exact analytic ground height; raises on out-of-extent queries."""
    z, valid = heights(field, x, y)
    if not bool(valid):
        raise OutOfExtentError(f"({x}, {y}) outside terrain extent {field.extent}")
    return float(z)


def ground_truth_sample(field: TerrainField, base_pose: BasePose) -> ElevationSample:
    """Exact 96-point elevation sample relative to the base link height."""
    pts = base_pose.lattice_world_xy()
    z, valid = heights(field, pts[:, 0], pts[:, 1])
    base_z = float(base_pose.position[2])
    rel = np.where(valid, z - base_z, field.fill_value)
    return ElevationSample(heights=rel, validity=valid)


def dump_height_grid(field: TerrainField, pitch: float, out_path: str) -> int:
    """Write a dense (x, y, z) CSV of the terrain at the given pitch."""
    x_min, x_max, y_min, y_max = field.extent
    xs = np.arange(x_min, x_max + pitch / 2, pitch)
    ys = np.arange(y_min, y_max + pitch / 2, pitch)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    z, _ = heights(field, gx.ravel(), gy.ravel())
    rows = np.column_stack([gx.ravel(), gy.ravel(), z])
    with open(out_path, "w") as f:
        f.write("x,y,z\n")
        for r in rows:
            f.write(f"{r[0]:.6f},{r[1]:.6f},{r[2]:.6f}\n")
    return len(rows)


__all__ = [
    "TerrainKind",
    "TerrainParams",
    "TerrainField",
    "OutOfExtentError",
    "generate_terrain",
    "height_at",
    "heights",
    "ground_truth_sample",
    "dump_height_grid",
]
