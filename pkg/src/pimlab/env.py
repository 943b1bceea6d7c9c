"""MiniBiped: a simplified 3-D biped environment on analytic terrain.

Floating torso integrated by Newton-Euler under gravity plus penalty
contact forces at ten foot probe points; joints are PD-driven
second-order systems with reflected inertia (massless-leg
approximation). Rich enough to exercise every observation field and
reward term while stepping fast on a CPU.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import EnvConfig, RobotConfig
from .robot import NUM_JOINTS, NUM_PROBES_PER_FOOT, RobotModel, mirror_matrix
from . import terrain as terrain_mod
from .terrain import TerrainField

GRAVITY = 9.81
_FD_EPS = 1e-6


class SimulationError(RuntimeError):
    """Raised when integration produces non-finite state."""


def quat_to_mat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_from_rotvec(v: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        return np.array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]]) / np.sqrt(1 + 0.25 * angle * angle)
    axis = v / angle
    h = 0.5 * angle
    return np.concatenate([[np.cos(h)], np.sin(h) * axis])


@dataclass
class SimState:
    base_pos: np.ndarray
    base_quat: np.ndarray  # (w, x, y, z), unit
    base_lin_vel: np.ndarray  # world frame
    base_ang_vel: np.ndarray  # world frame
    theta: np.ndarray
    theta_dot: np.ndarray
    theta_ddot: np.ndarray
    applied_torque: np.ndarray
    desired_torque: np.ndarray
    pd_target: np.ndarray
    action: np.ndarray  # a_t, applied this step
    prev_action: np.ndarray  # a_{t-1}
    foot_pos: np.ndarray  # (2, 3) sole centers, world
    foot_vel: np.ndarray  # (2, 3)
    foot_contact: np.ndarray  # (2,) bool
    foot_new_contact: np.ndarray  # (2,) bool
    foot_force: np.ndarray  # (2, 3) summed probe forces
    probe_clearance: np.ndarray  # (2, 5) probe height above ground
    ground_z: float  # terrain height under the base
    step_index: int
    command: np.ndarray  # (vx, vy, yaw_rate)

    @property
    def rot(self) -> np.ndarray:
        return quat_to_mat(self.base_quat)

    @property
    def gravity_body(self) -> np.ndarray:
        return self.rot.T @ np.array([0.0, 0.0, -1.0])

    @property
    def lin_vel_body(self) -> np.ndarray:
        return self.rot.T @ self.base_lin_vel

    @property
    def ang_vel_body(self) -> np.ndarray:
        return self.rot.T @ self.base_ang_vel

    def check_finite(self) -> None:
        for name in ("base_pos", "base_quat", "base_lin_vel", "base_ang_vel", "theta", "theta_dot"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise SimulationError(f"non-finite {name} at step {self.step_index}")


class MiniBiped:
    """One independently owned environment instance."""

    def __init__(self, env_cfg: EnvConfig | None = None, robot_cfg: RobotConfig | None = None):
        self.cfg = env_cfg or EnvConfig()
        self.model = RobotModel(robot_cfg or RobotConfig())
        self.stand_height = self.model.standing_height()
        self.arm_scale = 1.0
        self.waist_scale = 1.0
        self._mirror = mirror_matrix()

    # -- curriculum hook --------------------------------------------------
    def set_action_scales(self, arm: float, waist: float) -> None:
        self.arm_scale = float(arm)
        self.waist_scale = float(waist)

    def action_ranges(self) -> np.ndarray:
        from .robot import ARM_JOINTS, WAIST_JOINTS

        r = self.model.action_range.copy()
        r[ARM_JOINTS] *= self.arm_scale
        r[WAIST_JOINTS] *= self.waist_scale
        return r

    # -- lifecycle --------------------------------------------------------
    def reset(self, field: TerrainField, command, seed: int) -> SimState:
        rng = np.random.default_rng(seed)
        candidates = [(-1.0, 0.0), (-1.5, 0.0), (-0.5, 0.0), (-2.0, 0.0), (-1.0, 0.5)]
        spawn = None
        theta = self.model.default_angles.copy()
        for (sx, sy) in candidates:
            probes = self.model.probe_points(np.array([sx, sy, 2.0]), np.eye(3), theta)
            z, valid = terrain_mod.heights(field, probes[:, 0], probes[:, 1])
            if np.all(valid) and np.all(z > -0.5) and np.ptp(z) < 0.12:
                spawn = (sx, sy, float(z.max()))
                break
        if spawn is None:
            raise RuntimeError("no standable spawn found on terrain")
        sx, sy, ground = spawn
        # place the base at static equilibrium of the penalty contact
        n_probes = 2 * NUM_PROBES_PER_FOOT
        penetration = self.model.mass * GRAVITY / (self.cfg.contact_stiffness * n_probes)
        base_z = ground + self.stand_height - penetration
        jitter = self.cfg.spawn_jitter
        base_pos = np.array([sx, sy, base_z]) + rng.uniform(-jitter, jitter, 3) * np.array([1.0, 1.0, 0.0])
        theta = theta + rng.uniform(-jitter, jitter, NUM_JOINTS)
        state = SimState(
            base_pos=base_pos,
            base_quat=np.array([1.0, 0.0, 0.0, 0.0]),
            base_lin_vel=np.zeros(3),
            base_ang_vel=np.zeros(3),
            theta=theta,
            theta_dot=np.zeros(NUM_JOINTS),
            theta_ddot=np.zeros(NUM_JOINTS),
            applied_torque=np.zeros(NUM_JOINTS),
            desired_torque=np.zeros(NUM_JOINTS),
            pd_target=self.model.default_angles.copy(),
            action=np.zeros(NUM_JOINTS),
            prev_action=np.zeros(NUM_JOINTS),
            foot_pos=np.zeros((2, 3)),
            foot_vel=np.zeros((2, 3)),
            foot_contact=np.zeros(2, dtype=bool),
            foot_new_contact=np.zeros(2, dtype=bool),
            foot_force=np.zeros((2, 3)),
            probe_clearance=np.zeros((2, NUM_PROBES_PER_FOOT)),
            ground_z=ground,
            step_index=0,
            command=np.asarray(command, dtype=np.float64),
        )
        return self._refresh_derived(state, field, state)

    def step(self, state: SimState, action: np.ndarray, field: TerrainField) -> SimState:
        cfg = self.cfg
        model = self.model
        action = np.asarray(action, dtype=np.float64)
        if not np.all(np.isfinite(action)):
            raise SimulationError("non-finite action")
        ranges = self.action_ranges()
        offsets = np.clip(action, -ranges, ranges)
        target = model.default_angles + offsets

        pos = state.base_pos.copy()
        quat = state.base_quat.copy()
        lin = state.base_lin_vel.copy()
        ang = state.base_ang_vel.copy()
        theta = state.theta.copy()
        theta_dot = state.theta_dot.copy()
        tau_sum = np.zeros(NUM_JOINTS)
        tau_des_sum = np.zeros(NUM_JOINTS)
        probe_force = np.zeros((2 * NUM_PROBES_PER_FOOT, 3))
        dt = cfg.physics_dt
        for _ in range(cfg.substeps):
            tau_des = model.kp * (target - theta) - model.kd * theta_dot
            tau = np.clip(tau_des, -model.torque_limit, model.torque_limit)
            theta_dot = theta_dot + dt * tau / model.reflected_inertia
            theta = theta + dt * theta_dot
            low = model.pos_limits[:, 0]
            high = model.pos_limits[:, 1]
            clipped = (theta < low) | (theta > high)
            theta = np.clip(theta, low, high)
            theta_dot = np.where(clipped, 0.0, theta_dot)
            tau_sum += tau
            tau_des_sum += tau_des

            rot = quat_to_mat(quat)
            probes = model.probe_points(pos, rot, theta)
            # finite-difference probe velocities from the advanced configuration
            pos2 = pos + lin * _FD_EPS
            quat2 = quat_mul(quat_from_rotvec(ang * _FD_EPS), quat)
            quat2 = quat2 / np.linalg.norm(quat2)
            probes2 = model.probe_points(pos2, quat_to_mat(quat2), theta + theta_dot * _FD_EPS)
            pvel = (probes2 - probes) / _FD_EPS

            gz, valid = terrain_mod.heights(field, probes[:, 0], probes[:, 1])
            pen = np.where(valid, gz - probes[:, 2], -1.0)
            active = pen > 0.0
            fz = np.where(active, cfg.contact_stiffness * pen - cfg.contact_damping * pvel[:, 2], 0.0)
            fz = np.maximum(fz, 0.0)
            ft = -cfg.tangential_damping * pvel[:, :2]
            ft_norm = np.linalg.norm(ft, axis=1)
            cap = cfg.friction_coeff * fz
            scale = np.where(ft_norm > 1e-12, np.minimum(1.0, cap / np.maximum(ft_norm, 1e-12)), 0.0)
            ft = ft * scale[:, None]
            force = np.column_stack([ft, fz])
            probe_force = force  # last substep snapshot for contact bookkeeping

            total_f = force.sum(axis=0) + np.array([0.0, 0.0, -model.mass * GRAVITY])
            torque = np.cross(probes - pos, force).sum(axis=0)
            inertia_w = rot @ model.inertia @ rot.T
            ang_acc = np.linalg.solve(inertia_w, torque - np.cross(ang, inertia_w @ ang))
            lin = lin + dt * total_f / model.mass
            pos = pos + dt * lin
            ang = ang + dt * ang_acc
            quat = quat_mul(quat_from_rotvec(ang * dt), quat)
            quat = quat / np.linalg.norm(quat)

        ctrl_dt = dt * cfg.substeps
        new = replace(
            state,
            base_pos=pos,
            base_quat=quat,
            base_lin_vel=lin,
            base_ang_vel=ang,
            theta=theta,
            theta_dot=theta_dot,
            theta_ddot=(theta_dot - state.theta_dot) / ctrl_dt,
            applied_torque=tau_sum / cfg.substeps,
            desired_torque=tau_des_sum / cfg.substeps,
            pd_target=target,
            action=offsets,
            prev_action=state.action,
            step_index=state.step_index + 1,
        )
        new = self._refresh_derived(new, field, state, probe_force=probe_force)
        new.check_finite()
        return new

    def _refresh_derived(self, state: SimState, field: TerrainField, prev: SimState, probe_force=None) -> SimState:
        model = self.model
        rot = state.rot
        feet_p, feet_r = model.foot_frames(state.base_pos, rot, state.theta)
        pos2 = state.base_pos + state.base_lin_vel * _FD_EPS
        quat2 = quat_mul(quat_from_rotvec(state.base_ang_vel * _FD_EPS), state.base_quat)
        quat2 = quat2 / np.linalg.norm(quat2)
        feet_p2, _ = model.foot_frames(pos2, quat_to_mat(quat2), state.theta + state.theta_dot * _FD_EPS)
        state.foot_pos = feet_p
        state.foot_vel = (feet_p2 - feet_p) / _FD_EPS

        probes = model.probe_points(state.base_pos, rot, state.theta)
        gz, valid = terrain_mod.heights(field, probes[:, 0], probes[:, 1])
        clearance = np.where(valid, probes[:, 2] - gz, probes[:, 2])
        state.probe_clearance = clearance.reshape(2, NUM_PROBES_PER_FOOT)

        if probe_force is None:
            probe_force = np.zeros((2 * NUM_PROBES_PER_FOOT, 3))
        per_foot = probe_force.reshape(2, NUM_PROBES_PER_FOOT, 3).sum(axis=1)
        contact = per_foot[:, 2] > 0.0
        state.foot_force = per_foot
        state.foot_new_contact = contact & ~prev.foot_contact
        state.foot_contact = contact

        bz, bvalid = terrain_mod.heights(field, state.base_pos[0], state.base_pos[1])
        state.ground_z = float(bz) if bool(bvalid) else -np.inf
        return state

    # -- queries ----------------------------------------------------------
    def privileged(self, state: SimState) -> np.ndarray:
        """Exact base-frame linear velocity (critic-only during training)."""
        return state.lin_vel_body

    def termination(self, state: SimState) -> str:
        up = state.rot[:, 2]
        tilt = np.arccos(np.clip(up[2], -1.0, 1.0))
        if tilt > self.cfg.tilt_limit:
            return "fallen"
        if state.base_pos[2] - state.ground_z < self.cfg.height_fraction_limit * self.stand_height:
            return "fallen"
        if state.step_index >= self.cfg.horizon:
            return "timed_out"
        return "alive"

    def mechanical_energy(self, state: SimState) -> float:
        """Kinetic + gravitational + contact-spring energy of the torso and joints."""
        model = self.model
        inertia_w = state.rot @ model.inertia @ state.rot.T
        e = 0.5 * model.mass * state.base_lin_vel @ state.base_lin_vel
        e += 0.5 * state.base_ang_vel @ inertia_w @ state.base_ang_vel
        e += model.mass * GRAVITY * state.base_pos[2]
        e += 0.5 * model.reflected_inertia * state.theta_dot @ state.theta_dot
        pen = np.maximum(-state.probe_clearance, 0.0)
        e += 0.5 * self.cfg.contact_stiffness * float((pen * pen).sum())
        return float(e)


# -- x-z plane reflection helpers (used by symmetry tests and losses) ------

def mirror_action(action: np.ndarray) -> np.ndarray:
    return mirror_matrix() @ np.asarray(action, dtype=np.float64)


def mirror_state(state: SimState) -> SimState:
    """Reflect a full state through the x-z plane."""
    m = mirror_matrix()
    flip_vec = np.array([1.0, -1.0, 1.0])
    flip_pseudo = np.array([-1.0, 1.0, -1.0])
    q = state.base_quat
    swap_feet = [1, 0]
    return replace(
        state,
        base_pos=state.base_pos * flip_vec,
        base_quat=np.array([q[0], -q[1], q[2], -q[3]]),
        base_lin_vel=state.base_lin_vel * flip_vec,
        base_ang_vel=state.base_ang_vel * flip_pseudo,
        theta=m @ state.theta,
        theta_dot=m @ state.theta_dot,
        theta_ddot=m @ state.theta_ddot,
        applied_torque=m @ state.applied_torque,
        desired_torque=m @ state.desired_torque,
        pd_target=m @ (state.pd_target - 0.0),
        action=m @ state.action,
        prev_action=m @ state.prev_action,
        foot_pos=state.foot_pos[swap_feet] * flip_vec,
        foot_vel=state.foot_vel[swap_feet] * flip_vec,
        foot_contact=state.foot_contact[swap_feet],
        foot_new_contact=state.foot_new_contact[swap_feet],
        foot_force=state.foot_force[swap_feet] * flip_vec,
        probe_clearance=state.probe_clearance[swap_feet][:, [0, 1, 2, 4, 3]],
        command=state.command * np.array([1.0, -1.0, -1.0]),
    )


__all__ = [
    "MiniBiped",
    "SimState",
    "SimulationError",
    "GRAVITY",
    "mirror_state",
    "mirror_action",
    "quat_to_mat",
    "quat_mul",
    "quat_from_rotvec",
]
