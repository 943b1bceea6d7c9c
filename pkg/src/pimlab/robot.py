"""MiniBiped robot model: joint table, groups, mirror table, kinematics.

Topology: floating torso; per leg hip roll + hip pitch + knee pitch +
ankle pitch; one waist yaw; two shoulder pitches. 11 actuated joints.
The left/right joint lists are mirror-symmetric under the x-z plane
reflection, which the mirror table encodes as (partner index, sign).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RobotConfig

JOINT_NAMES = [
    "waist_yaw",
    "l_hip_roll",
    "l_hip_pitch",
    "l_knee_pitch",
    "l_ankle_pitch",
    "r_hip_roll",
    "r_hip_pitch",
    "r_knee_pitch",
    "r_ankle_pitch",
    "l_shoulder_pitch",
    "r_shoulder_pitch",
]
NUM_JOINTS = len(JOINT_NAMES)

WAIST_JOINTS = [0]
LEG_JOINTS = [1, 2, 3, 4, 5, 6, 7, 8]
ARM_JOINTS = [9, 10]
HIP_JOINTS = [1, 2, 5, 6]

# (partner, sign): roll/yaw-type joints negate, pitch-type joints swap plain
MIRROR_TABLE = {
    0: (0, -1.0),
    1: (5, -1.0),
    5: (1, -1.0),
    2: (6, 1.0),
    6: (2, 1.0),
    3: (7, 1.0),
    7: (3, 1.0),
    4: (8, 1.0),
    8: (4, 1.0),
    9: (10, 1.0),
    10: (9, 1.0),
}

PROBE_NAMES = ["front", "middle", "hind", "left", "right"]
NUM_PROBES_PER_FOOT = len(PROBE_NAMES)


def validate_mirror_table(table: dict) -> None:
    """Every joint has exactly one partner and the table is its own inverse."""
    for i, (j, s) in table.items():
        jj, ss = table[j]
        if jj != i or ss != s:
            raise ValueError(f"mirror table is not involutive at joint {i}")


validate_mirror_table(MIRROR_TABLE)


def mirror_matrix() -> np.ndarray:
    """Signed permutation applying the joint-space x-z reflection."""
    m = np.zeros((NUM_JOINTS, NUM_JOINTS))
    for i, (j, s) in MIRROR_TABLE.items():
        m[j, i] = s
    return m


@dataclass
class RobotModel:
    cfg: RobotConfig

    def __post_init__(self):
        c = self.cfg
        self.default_angles = np.zeros(NUM_JOINTS)
        for side in (0, 4):  # left block starts at 1, right at 5
            self.default_angles[1 + side] = 0.0
            self.default_angles[2 + side] = c.default_hip_pitch
            self.default_angles[3 + side] = c.default_knee_pitch
            self.default_angles[4 + side] = c.default_ankle_pitch
        self.kp = np.zeros(NUM_JOINTS)
        self.kd = np.zeros(NUM_JOINTS)
        self.kp[WAIST_JOINTS] = c.kp_waist
        self.kd[WAIST_JOINTS] = c.kd_waist
        self.kp[LEG_JOINTS] = c.kp_leg
        self.kd[LEG_JOINTS] = c.kd_leg
        self.kp[ARM_JOINTS] = c.kp_arm
        self.kd[ARM_JOINTS] = c.kd_arm
        self.torque_limit = np.full(NUM_JOINTS, c.torque_limit)
        self.velocity_limit = np.full(NUM_JOINTS, c.velocity_limit)
        self.pos_limits = np.zeros((NUM_JOINTS, 2))
        self.pos_limits[0] = (-1.0, 1.0)  # waist yaw
        for side in (0, 4):
            self.pos_limits[1 + side] = (-0.5, 0.5)  # hip roll
            self.pos_limits[2 + side] = (-1.5, 1.0)  # hip pitch
            self.pos_limits[3 + side] = (-0.1, 2.0)  # knee
            self.pos_limits[4 + side] = (-1.0, 1.0)  # ankle
        self.pos_limits[9] = (-1.5, 1.5)
        self.pos_limits[10] = (-1.5, 1.5)
        self.action_range = np.zeros(NUM_JOINTS)
        self.action_range[LEG_JOINTS] = c.leg_action_range
        self.action_range[ARM_JOINTS] = c.arm_action_range
        self.action_range[WAIST_JOINTS] = c.waist_action_range
        self.mass = c.torso_mass
        self.inertia = np.diag(c.torso_inertia)
        self.inertia_inv = np.diag(1.0 / np.asarray(c.torso_inertia))
        self.reflected_inertia = c.reflected_inertia
        # probe offsets in the foot (sole) frame
        hl, hw = c.foot_half_length, c.foot_half_width
        self.probe_offsets = np.array(
            [[hl, 0.0, 0.0], [0.0, 0.0, 0.0], [-hl, 0.0, 0.0], [0.0, hw, 0.0], [0.0, -hw, 0.0]]
        )

    # -- kinematics -------------------------------------------------------
    def foot_frames(self, base_pos: np.ndarray, base_rot: np.ndarray, theta: np.ndarray):
        """Foot sole center positions and orientations for both feet.

        Returns (positions (2,3), rotations (2,3,3)); index 0 = left.
        """
        c = self.cfg
        out_p = np.zeros((2, 3))
        out_r = np.zeros((2, 3, 3))
        for f, (sgn, base_idx) in enumerate(((1.0, 1), (-1.0, 5))):
            roll = theta[base_idx]
            hp = theta[base_idx + 1]
            kn = theta[base_idx + 2]
            ak = theta[base_idx + 3]
            hip = base_pos + base_rot @ np.array([0.0, sgn * c.hip_offset_y, c.hip_offset_z])
            r_roll = base_rot @ _rot_x(roll)
            thigh_end = hip + r_roll @ (_rot_y(hp) @ np.array([0.0, 0.0, -c.thigh_length]))
            ankle = thigh_end + r_roll @ (_rot_y(hp + kn) @ np.array([0.0, 0.0, -c.shank_length]))
            r_foot = r_roll @ _rot_y(hp + kn + ak)
            sole = ankle + r_foot @ np.array([0.0, 0.0, -c.sole_offset])
            out_p[f] = sole
            out_r[f] = r_foot
        return out_p, out_r

    def probe_points(self, base_pos: np.ndarray, base_rot: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """(10, 3) world positions of foot probes; left foot first, probe order fixed."""
        feet_p, feet_r = self.foot_frames(base_pos, base_rot, theta)
        pts = np.zeros((2 * NUM_PROBES_PER_FOOT, 3))
        for f in range(2):
            pts[f * NUM_PROBES_PER_FOOT : (f + 1) * NUM_PROBES_PER_FOOT] = (
                feet_p[f] + self.probe_offsets @ feet_r[f].T
            )
        return pts

    def standing_height(self) -> float:
        """Base height above the sole at default joint angles, feet flat."""
        feet_p, _ = self.foot_frames(np.zeros(3), np.eye(3), self.default_angles)
        return float(-feet_p[:, 2].mean())


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


__all__ = [
    "JOINT_NAMES",
    "NUM_JOINTS",
    "WAIST_JOINTS",
    "LEG_JOINTS",
    "ARM_JOINTS",
    "HIP_JOINTS",
    "MIRROR_TABLE",
    "PROBE_NAMES",
    "NUM_PROBES_PER_FOOT",
    "RobotModel",
    "mirror_matrix",
    "validate_mirror_table",
]
