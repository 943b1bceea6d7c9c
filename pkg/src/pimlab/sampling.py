"""Canonical 96-point sampling lattice and the elevation sample record.

The lattice is 12 rows (longitudinal, spanning 1.2 m) by 8 columns
(lateral, spanning 0.8 m), centered on the robot, in its yaw-aligned,
gravity-vertical frame. Row-major ordering over (row, column) is the
canonical layout shared by the terrain oracle and the elevation map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LATTICE_ROWS = 12  # longitudinal (x)
LATTICE_COLS = 8  # lateral (y)
LATTICE_POINTS = LATTICE_ROWS * LATTICE_COLS
LATTICE_LENGTH = 1.2
LATTICE_WIDTH = 0.8
LATTICE_TAG = "rows12x_cols8y_rowmajor"


def lattice_offsets() -> np.ndarray:
    """(96, 2) array of (x, y) offsets in the robot's yaw-aligned frame."""
    xs = np.linspace(-LATTICE_LENGTH / 2, LATTICE_LENGTH / 2, LATTICE_ROWS)
    ys = np.linspace(-LATTICE_WIDTH / 2, LATTICE_WIDTH / 2, LATTICE_COLS)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)  # (12, 8, 2)
    return grid.reshape(LATTICE_POINTS, 2)


def mirror_permutation() -> np.ndarray:
    """Index permutation realizing the lateral (y -> -y) lattice mirror."""
    idx = np.arange(LATTICE_POINTS).reshape(LATTICE_ROWS, LATTICE_COLS)
    return idx[:, ::-1].reshape(-1).copy()


@dataclass
class ElevationSample:
    """96 ground heights relative to the base link, plus per-point validity."""

    heights: np.ndarray  # (96,) float64, z relative to base link
    validity: np.ndarray  # (96,) bool
    layout: str = LATTICE_TAG

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=np.float64)
        self.validity = np.asarray(self.validity, dtype=bool)
        if self.heights.shape != (LATTICE_POINTS,):
            raise ValueError(f"elevation sample needs {LATTICE_POINTS} heights, got {self.heights.shape}")
        if self.validity.shape != (LATTICE_POINTS,):
            raise ValueError("validity shape mismatch")


@dataclass(frozen=True)
class BasePose:
    """Base-link pose used for sampling: position plus yaw about gravity."""

    position: tuple  # (x, y, z) in meters
    yaw: float = 0.0

    def lattice_world_xy(self) -> np.ndarray:
        """Lattice points rotated by yaw and translated to the base (x, y)."""
        offs = lattice_offsets()
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return offs @ rot.T + np.asarray(self.position[:2])


__all__ = [
    "LATTICE_ROWS",
    "LATTICE_COLS",
    "LATTICE_POINTS",
    "LATTICE_TAG",
    "lattice_offsets",
    "mirror_permutation",
    "ElevationSample",
    "BasePose",
]
