"""Policy observations, proprioceptive history, and symmetry operators.

The non-perceptive frame is the fixed concatenation
[command, base angular velocity, gravity direction, joint positions,
joint velocities, last action]; the perceptive frame is the 96-entry
elevation sample. All three reflection operators (proprioceptive,
perceptive, action) are involutions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .config import ObserveConfig
from .env import SimState
from .robot import NUM_JOINTS, mirror_matrix
from .sampling import ElevationSample, LATTICE_POINTS, mirror_permutation

CMD_DIM = 3
OBS_N_DIM = CMD_DIM + 3 + 3 + 3 * NUM_JOINTS  # 42
OBS_P_DIM = LATTICE_POINTS

_SL_CMD = slice(0, 3)
_SL_OMEGA = slice(3, 6)
_SL_GRAV = slice(6, 9)
_SL_THETA = slice(9, 9 + NUM_JOINTS)
_SL_THETA_DOT = slice(9 + NUM_JOINTS, 9 + 2 * NUM_JOINTS)
_SL_ACTION = slice(9 + 2 * NUM_JOINTS, 9 + 3 * NUM_JOINTS)

_MIRROR = mirror_matrix()
_PERM = mirror_permutation()

# fixed per-channel input scaling for function approximators; identical for
# mirrored channels, so it commutes with every reflection operator
PROPRIO_SCALE = np.concatenate(
    [
        np.ones(3),  # command
        np.full(3, 0.25),  # angular velocity
        np.ones(3),  # gravity direction
        np.ones(NUM_JOINTS),  # joint positions
        np.full(NUM_JOINTS, 0.05),  # joint velocities
        np.ones(NUM_JOINTS),  # previous action
    ]
)
PERCEPTIVE_SCALE = 5.0


@dataclass
class ObservationFrame:
    obs_n: np.ndarray  # (42,)
    obs_p: np.ndarray  # (96,)

    def __post_init__(self):
        self.obs_n = np.asarray(self.obs_n, dtype=np.float64)
        self.obs_p = np.asarray(self.obs_p, dtype=np.float64)
        if self.obs_n.shape != (OBS_N_DIM,):
            raise ValueError(f"o^n must have dim {OBS_N_DIM}, got {self.obs_n.shape}")
        if self.obs_p.shape != (OBS_P_DIM,):
            raise ValueError(f"o^p must have dim {OBS_P_DIM}, got {self.obs_p.shape}")


def assemble(
    state: SimState,
    command,
    sample: ElevationSample,
    noise: ObserveConfig | None = None,
    rng: np.random.Generator | None = None,
) -> ObservationFrame:
    """Fixed-layout observation assembly; noise only when a config+rng is given."""
    omega = state.ang_vel_body.copy()
    grav = state.gravity_body.copy()
    theta = state.theta.copy()
    theta_dot = state.theta_dot.copy()
    if noise is not None and rng is not None:
        theta = theta + rng.normal(0.0, noise.noise_joint_pos, NUM_JOINTS)
        theta_dot = theta_dot + rng.normal(0.0, noise.noise_joint_vel, NUM_JOINTS)
        omega = omega + rng.normal(0.0, noise.noise_ang_vel, 3)
        grav = grav + rng.normal(0.0, noise.noise_gravity, 3)
    obs_n = np.concatenate([np.asarray(command, dtype=np.float64), omega, grav, theta, theta_dot, state.action])
    return ObservationFrame(obs_n=obs_n, obs_p=sample.heights.copy())


def split(obs_n: np.ndarray) -> dict:
    return {
        "command": obs_n[_SL_CMD],
        "omega": obs_n[_SL_OMEGA],
        "gravity": obs_n[_SL_GRAV],
        "theta": obs_n[_SL_THETA],
        "theta_dot": obs_n[_SL_THETA_DOT],
        "action": obs_n[_SL_ACTION],
    }


def flip_proprio(obs_n: np.ndarray) -> np.ndarray:
    """G_o^n: reflect a non-perceptive frame through the x-z plane.

    Works on a single frame (42,) or a batch (..., 42).
    """
    obs_n = np.asarray(obs_n, dtype=np.float64)
    out = obs_n.copy()
    out[..., 1] = -obs_n[..., 1]  # v_y^c
    out[..., 2] = -obs_n[..., 2]  # yaw-rate command
    out[..., 3] = -obs_n[..., 3]  # roll rate
    out[..., 5] = -obs_n[..., 5]  # yaw rate
    out[..., 7] = -obs_n[..., 7]  # g_y
    for sl in (_SL_THETA, _SL_THETA_DOT, _SL_ACTION):
        out[..., sl] = obs_n[..., sl] @ _MIRROR.T
    return out


def flip_perceptive(obs_p) -> np.ndarray:
    """G_o^p: mirror lattice columns about the x axis; heights unchanged."""
    if isinstance(obs_p, ElevationSample):
        return ElevationSample(heights=obs_p.heights[_PERM], validity=obs_p.validity[_PERM])
    obs_p = np.asarray(obs_p, dtype=np.float64)
    return obs_p[..., _PERM]


def flip_action(action: np.ndarray) -> np.ndarray:
    """G_a: left/right joint swap with per-joint signs from the mirror table."""
    return np.asarray(action, dtype=np.float64) @ _MIRROR.T


class HistoryBuffer:
    """Ring of the last H+1 non-perceptive frames, pre-filled at reset."""

    def __init__(self, history: int):
        self.history = int(history)
        self._frames: deque = deque(maxlen=self.history + 1)

    def reset(self, frame: np.ndarray) -> None:
        frame = np.asarray(frame, dtype=np.float64)
        self._frames.clear()
        for _ in range(self.history + 1):
            self._frames.append(frame.copy())

    def push(self, frame: np.ndarray) -> None:
        if not self._frames:
            self.reset(frame)
        else:
            self._frames.append(np.asarray(frame, dtype=np.float64).copy())

    def stacked(self) -> np.ndarray:
        """(H+1, 42) array, oldest first."""
        return np.stack(list(self._frames))

    def flat(self) -> np.ndarray:
        return self.stacked().reshape(-1)


__all__ = [
    "OBS_N_DIM",
    "OBS_P_DIM",
    "CMD_DIM",
    "PROPRIO_SCALE",
    "PERCEPTIVE_SCALE",
    "ObservationFrame",
    "assemble",
    "split",
    "flip_proprio",
    "flip_perceptive",
    "flip_action",
    "HistoryBuffer",
]
