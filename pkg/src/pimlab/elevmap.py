"""Robot-centric, gravity-aligned grid elevation mapping.

Maintains a square grid of ground heights in a map frame whose z-axis is
aligned with gravity at startup, fuses ground-filtered point-cloud scans
with a per-cell scalar Kalman update, recenters around the robot, and
samples the canonical 96-point lattice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ElevmapConfig
from .sampling import BasePose, ElevationSample, LATTICE_POINTS


class MapInitError(ValueError):
    """Gravity alignment could not be estimated."""


class ScanError(ValueError):
    """A scan contained non-finite data."""


@dataclass(frozen=True)
class MapFrame:
    """Gravity-aligned map frame: odometry vectors map into it via rotation @ (p - origin)."""

    origin: np.ndarray  # (3,)
    rotation: np.ndarray  # (3, 3), rows are map axes in odometry coordinates

    def to_map(self, points: np.ndarray) -> np.ndarray:
        return (points - self.origin) @ self.rotation.T


@dataclass
class PointCloudScan:
    points: np.ndarray  # (N, 3) in sensor frame
    sensor_pose: tuple  # (position (3,), rotation (3,3)) sensor -> odometry
    timestamp: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        pos, rot = self.sensor_pose
        pos = np.asarray(pos, dtype=np.float64)
        rot = np.asarray(rot, dtype=np.float64)
        if not np.all(np.isfinite(self.points)):
            raise ScanError("scan contains non-finite points")
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-6:
            raise ScanError("sensor rotation is not orthonormal")
        self.sensor_pose = (pos, rot)

    def odometry_points(self) -> np.ndarray:
        pos, rot = self.sensor_pose
        return self.points @ rot.T + pos


def _rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation matrix taking unit vector a to unit vector b (Rodrigues)."""
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    s = float(np.linalg.norm(v))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        # antipodal: rotate pi about any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        return np.eye(3) + 2.0 * k @ k
    k = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + k + k @ k * ((1 - c) / (s * s))


def init_map_frame(accel_samples, origin=(0.0, 0.0, 0.0)) -> MapFrame:
    """Align the map -z axis with the mean measured acceleration direction."""
    acc = np.asarray(accel_samples, dtype=np.float64).reshape(-1, 3)
    if acc.shape[0] == 0:
        raise MapInitError("no acceleration samples")
    mean = acc.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-9:
        raise MapInitError("zero-magnitude mean acceleration")
    g_hat = mean / norm
    rot = _rotation_between(g_hat, np.array([0.0, 0.0, -1.0]))
    return MapFrame(origin=np.asarray(origin, dtype=np.float64), rotation=rot)


def filter_ground_points(scan: PointCloudScan, band, frame: MapFrame | None = None) -> PointCloudScan:
    """Keep only points whose map-frame z lies in [z_min, z_max]; order preserved."""
    z_min, z_max = band
    if not z_min < z_max:
        raise ValueError(f"band must satisfy z_min < z_max, got {band}")
    pts_odom = scan.odometry_points()
    z = pts_odom @ frame.rotation[2] - frame.rotation[2] @ frame.origin if frame is not None else pts_odom[:, 2]
    keep = (z >= z_min) & (z <= z_max)
    return PointCloudScan(points=scan.points[keep], sensor_pose=scan.sensor_pose, timestamp=scan.timestamp)


class ElevationMap:
    """Square robot-centric height grid with per-cell (height, variance, valid)."""

    def __init__(self, frame: MapFrame, cfg: ElevmapConfig | None = None):
        self.cfg = cfg or ElevmapConfig()
        self.frame = frame
        self.resolution = float(self.cfg.resolution)
        self.size = int(round(self.cfg.size_m / self.resolution))
        self.heights = np.zeros((self.size, self.size))
        self.variance = np.full((self.size, self.size), np.inf)
        self.valid = np.zeros((self.size, self.size), dtype=bool)
        self.last_update = np.full((self.size, self.size), -1, dtype=np.int64)
        # map-frame coordinates of cell (0, 0) center
        half = self.size // 2
        self.origin_cell = np.array([-half * self.resolution, -half * self.resolution])
        self.step_count = 0
        self.dropped_points = 0

    # -- indexing ---------------------------------------------------------
    def cell_index(self, xy: np.ndarray) -> np.ndarray:
        return np.floor((xy - self.origin_cell + self.resolution / 2) / self.resolution).astype(np.int64)

    def cell_center(self, idx: np.ndarray) -> np.ndarray:
        return idx * self.resolution + self.origin_cell

    # -- updates ----------------------------------------------------------
    def recenter(self, base_xy_map: np.ndarray) -> None:
        """Shift the grid by whole cells so the base sits in the central region."""
        center = self.origin_cell + (self.size // 2) * self.resolution
        margin = self.cfg.recenter_fraction * self.cfg.size_m / 2
        shift_cells = np.zeros(2, dtype=np.int64)
        for axis in range(2):
            off = base_xy_map[axis] - center[axis]
            if abs(off) > margin:
                shift_cells[axis] = int(np.round(off / self.resolution))
        if not shift_cells.any():
            return
        sx, sy = int(shift_cells[0]), int(shift_cells[1])
        for name in ("heights", "variance", "valid", "last_update"):
            arr = getattr(self, name)
            out = np.zeros_like(arr)
            if name == "variance":
                out[:] = np.inf
            elif name == "last_update":
                out[:] = -1
            src_x = slice(max(sx, 0), self.size + min(sx, 0))
            dst_x = slice(max(-sx, 0), self.size + min(-sx, 0))
            src_y = slice(max(sy, 0), self.size + min(sy, 0))
            dst_y = slice(max(-sy, 0), self.size + min(-sy, 0))
            out[dst_x, dst_y] = arr[src_x, src_y]
            setattr(self, name, out)
        self.origin_cell = self.origin_cell + shift_cells * self.resolution

    def integrate_scan(self, scan: PointCloudScan, odom_base: np.ndarray) -> "ElevationMap":
        """Fuse a ground-filtered scan; odom_base is the base position in odometry frame."""
        odom_base = np.asarray(odom_base, dtype=np.float64)
        if not np.all(np.isfinite(odom_base)):
            raise ScanError("non-finite odometry")
        pts_map = self.frame.to_map(scan.odometry_points())
        base_map = self.frame.to_map(odom_base[None, :])[0]
        self.recenter(base_map[:2])
        idx = self.cell_index(pts_map[:, :2])
        inside = (idx[:, 0] >= 0) & (idx[:, 0] < self.size) & (idx[:, 1] >= 0) & (idx[:, 1] < self.size)
        self.dropped_points += int((~inside).sum())
        idx = idx[inside]
        z = pts_map[inside, 2]
        r2 = self.cfg.measurement_noise**2
        # sequential scalar Kalman update per point; order is scan order
        for (ix, iy), zi in zip(idx, z):
            if not self.valid[ix, iy] or not np.isfinite(self.variance[ix, iy]):
                self.heights[ix, iy] = zi
                self.variance[ix, iy] = r2
                self.valid[ix, iy] = True
            else:
                var = self.variance[ix, iy]
                gain = var / (var + r2)
                self.heights[ix, iy] += gain * (zi - self.heights[ix, iy])
                self.variance[ix, iy] = var * r2 / (var + r2)
            self.last_update[ix, iy] = self.step_count
        self.step_count += 1
        return self

    # -- queries ----------------------------------------------------------
    def sample_elevation(self, base_pose: BasePose) -> ElevationSample:
        """Sample the canonical lattice by bilinear interpolation over valid cells.

        base_pose is an odometry-frame pose; the lattice lives in the
        gravity-aligned map frame, so the base is mapped through the frame
        first and heights are relative to the base's map-frame z.
        """
        b_map = self.frame.to_map(np.asarray(base_pose.position, dtype=np.float64)[None, :])[0]
        map_pose = BasePose(position=tuple(b_map), yaw=base_pose.yaw)
        pts = map_pose.lattice_world_xy()
        base_z = float(b_map[2])
        out = np.full(LATTICE_POINTS, self.cfg_fill(), dtype=np.float64)
        ok = np.zeros(LATTICE_POINTS, dtype=bool)
        for i, xy in enumerate(pts):
            h, status = self._interpolate(xy)
            if status == "ok":
                out[i] = h - base_z
                ok[i] = True
            elif status == "near":
                # nearest-valid-cell height, but flagged so callers can't
                # mistake it for a measurement
                out[i] = h - base_z
        return ElevationSample(heights=out, validity=ok)

    def cfg_fill(self) -> float:
        return 0.0

    def _interpolate(self, xy: np.ndarray) -> tuple[float, str]:
        g = (xy - self.origin_cell) / self.resolution
        i0 = int(np.floor(g[0]))
        j0 = int(np.floor(g[1]))
        fx = g[0] - i0
        fy = g[1] - j0
        corners = [(i0, j0), (i0 + 1, j0), (i0, j0 + 1), (i0 + 1, j0 + 1)]
        vals = []
        valid = []
        for (ci, cj) in corners:
            inb = 0 <= ci < self.size and 0 <= cj < self.size
            v = inb and bool(self.valid[ci, cj])
            valid.append(v)
            vals.append(self.heights[ci, cj] if v else np.nan)
        n_valid = sum(valid)
        if n_valid == 4:
            h00, h10, h01, h11 = vals
            top = h00 + (h10 - h00) * fx
            bot = h01 + (h11 - h01) * fx
            return float(top + (bot - top) * fy), "ok"
        if n_valid == 3:
            mean = float(np.nanmean(vals))
            vals = [mean if np.isnan(v) else v for v in vals]
            h00, h10, h01, h11 = vals
            top = h00 + (h10 - h00) * fx
            bot = h01 + (h11 - h01) * fx
            return float(top + (bot - top) * fy), "ok"
        # fall back to the nearest valid cell nearby; the point stays flagged invalid
        ic = int(np.round(g[0]))
        jc = int(np.round(g[1]))
        best = None
        for di in range(-2, 3):
            for dj in range(-2, 3):
                ci, cj = ic + di, jc + dj
                if 0 <= ci < self.size and 0 <= cj < self.size and self.valid[ci, cj]:
                    d2 = di * di + dj * dj
                    if best is None or d2 < best[0]:
                        best = (d2, self.heights[ci, cj])
        if best is not None:
            return float(best[1]), "near"
        return 0.0, "none"

    def dump(self, out_path: str) -> None:
        with open(out_path, "w") as f:
            f.write("cell_x,cell_y,height,variance,valid\n")
            for i in range(self.size):
                for j in range(self.size):
                    var = self.variance[i, j]
                    var_s = f"{var:.9g}" if np.isfinite(var) else "inf"
                    f.write(f"{i},{j},{self.heights[i, j]:.6f},{var_s},{int(self.valid[i, j])}\n")


__all__ = [
    "MapFrame",
    "PointCloudScan",
    "ElevationMap",
    "MapInitError",
    "ScanError",
    "init_map_frame",
    "filter_ground_points",
]
