"""Reward fidelity: every term re-derived independently with scalar math."""

import math

import numpy as np
import pytest

from pimlab import rewards as R
from pimlab.config import RewardConfig, RobotConfig
from pimlab.env import mirror_state
from pimlab.robot import ARM_JOINTS, HIP_JOINTS, NUM_PROBES_PER_FOOT, RobotModel, WAIST_JOINTS

from conftest import make_random_state


# -- independent scalar re-implementations ---------------------------------
# Deliberately written with explicit loops and scalar ops so a shared
# vectorization mistake cannot hide in both implementations.

def _body(state):
    rot = state.rot
    v = rot.T @ state.base_lin_vel
    w = rot.T @ state.base_ang_vel
    g = rot.T @ np.array([0.0, 0.0, -1.0])
    return v, w, g


def oracle_terms(state, prev, command, cfg, model):
    v, w, g = _body(state)
    out = {}
    e = 0.0
    for i in range(2):
        e += (command[i] - v[i]) ** 2
    out["lin_velocity_tracking"] = math.exp(-e / cfg.tracking_sigma)
    out["ang_velocity_tracking"] = math.exp(-((command[2] - w[2]) ** 2) / cfg.tracking_sigma)
    out["lin_velocity_z"] = v[2] ** 2
    out["ang_velocity_xy"] = w[0] ** 2 + w[1] ** 2
    out["orientation"] = g[0] ** 2 + g[1] ** 2
    out["joint_accelerations"] = sum(x * x for x in state.theta_ddot)
    den = sum(x * x for x in v) + 0.2 * sum(x * x for x in w)
    den = max(den, cfg.power_denominator_floor)
    out["joint_power"] = sum(abs(t) * abs(q) for t, q in zip(state.applied_torque, state.theta_dot)) / den
    h = state.base_pos[2] - 0.5 * (state.foot_pos[0, 2] + state.foot_pos[1, 2])
    out["body_height"] = (cfg.target_height - h) ** 2
    total = 0.0
    for f in range(2):
        clearance = state.probe_clearance[f, 1]
        speed = math.hypot(state.foot_vel[f, 0], state.foot_vel[f, 1])
        total += (cfg.swing_apex - clearance) ** 2 * speed
    out["feet_clearance"] = total
    out["action_rate"] = sum((a - b) ** 2 for a, b in zip(state.action, state.prev_action))
    out["smoothness"] = sum(
        (a - 2.0 * b + c) ** 2 for a, b, c in zip(state.action, state.prev_action, prev.prev_action)
    )
    stumble = 0.0
    for f in range(2):
        fxy = math.hypot(state.foot_force[f, 0], state.foot_force[f, 1])
        if fxy > 3.0 * abs(state.foot_force[f, 2]):
            stumble = 1.0
    out["feet_stumble"] = stumble
    out["torques"] = sum((t / k) ** 2 for t, k in zip(state.applied_torque, model.kp))
    out["joint_velocity"] = sum(x * x for x in state.theta_dot)
    out["joint_tracking_error"] = sum((a - b) ** 2 for a, b in zip(state.theta, state.pd_target))
    out["arm_joint_deviation"] = sum(
        (state.theta[j] - model.default_angles[j]) ** 2 for j in ARM_JOINTS
    )
    out["hip_joint_deviation"] = sum(
        (state.theta[j] - model.default_angles[j]) ** 2 for j in HIP_JOINTS
    )
    out["waist_joint_deviation"] = sum(
        (state.theta[j] - model.default_angles[j]) ** 2 for j in WAIST_JOINTS
    )
    pos_pen = 0.0
    for j in range(len(state.theta)):
        lo, hi = model.pos_limits[j]
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) * cfg.soft_limit_fraction
        pos_pen += max(abs(state.theta[j] - mid) - half, 0.0)
    out["joint_pos_limits"] = pos_pen
    vel_lim = np.broadcast_to(model.velocity_limit, state.theta_dot.shape)
    out["joint_vel_limits"] = sum(
        max(abs(q) - vl, 0.0) for q, vl in zip(state.theta_dot, vel_lim)
    )
    tau_lim = np.broadcast_to(model.torque_limit, state.desired_torque.shape)
    out["torque_limits"] = sum(
        max(abs(t) - tl, 0.0) for t, tl in zip(state.desired_torque, tau_lim)
    )
    n_contact = int(state.foot_contact[0]) + int(state.foot_contact[1])
    out["no_fly"] = 1.0 if n_contact == 1 else 0.0
    rot = state.rot
    rel_l = rot.T @ (state.foot_pos[0] - state.base_pos)
    rel_r = rot.T @ (state.foot_pos[1] - state.base_pos)
    out["feet_lateral_distance"] = min(abs(rel_l[1] - rel_r[1]) - cfg.d_min, 0.0)
    slip = 0.0
    for f in range(2):
        if state.foot_contact[f] and not state.foot_new_contact[f]:
            slip += math.hypot(state.foot_vel[f, 0], state.foot_vel[f, 1])
    out["feet_slip"] = slip
    gp = 0.0
    for f in range(2):
        c = state.probe_clearance[f]
        m = sum(c) / len(c)
        gp += sum((x - m) ** 2 for x in c) / len(c)
    out["feet_ground_parallel"] = gp
    out["feet_contact_force"] = sum(
        max(state.foot_force[f, 2] - cfg.contact_force_threshold, 0.0) for f in range(2)
    )
    probes = model.probe_points(state.base_pos, rot, state.theta)
    d = [probes[k, 2] - probes[k + NUM_PROBES_PER_FOOT, 2] for k in range(NUM_PROBES_PER_FOOT)]
    dm = sum(d) / len(d)
    out["feet_parallel"] = sum((x - dm) ** 2 for x in d) / len(d)
    out["contact_momentum"] = sum(
        abs(state.foot_vel[f, 2] * state.foot_force[f, 2]) for f in range(2)
    )
    return out


TABLE_WEIGHTS = [
    ("Lin. velocity tracking", 1.0),
    ("Ang. velocity tracking", 1.0),
    ("Linear velocity (z)", -0.5),
    ("Angular velocity (xy)", -0.025),
    ("Orientation", -1.25),
    ("Joint accelerations", -2.5e-7),
    ("Joint power", -2.5e-5),
    ("Body height w.r.t. feet", 0.1),
    ("Feet clearance", -0.25),
    ("Action rate", -0.01),
    ("Smoothness", -0.01),
    ("Feet stumble", -3.0),
    ("Torques", -2.5e-6),
    ("Joint velocity", -1.0e-4),
    ("Joint tracking error", -0.25),
    ("Arm joint deviation", -0.1),
    ("Hip joint deviation", -0.5),
    ("Waist joint deviation", -0.25),
    ("Joint pos limits", -2.0),
    ("Joint vel limits", -0.1),
    ("Torque limits", -0.1),
    ("No fly", 0.25),
    ("Feet lateral distance", 2.5),
    ("Feet slip", -0.25),
    ("Feet ground parallel", -2.0),
    ("Feet contact force", -2.5e-4),
    ("Feet parallel", -2.5),
    ("Contact momentum", -2.5e-4),
]


def test_weights_table_matches_published_values():
    table = R.weights_table(RewardConfig())
    assert table == TABLE_WEIGHTS


def test_term_count_and_order():
    assert len(R.TERM_NAMES) == 28
    assert R.TERM_NAMES == [n for n, _ in zip(R.TERM_NAMES, TABLE_WEIGHTS)]
    assert set(R.DISPLAY_NAMES) == set(R.TERM_NAMES)


def test_every_term_matches_independent_oracle():
    cfg = RewardConfig()
    model = RobotModel(RobotConfig())
    rng = np.random.default_rng(0)
    for case in range(1000):
        state = make_random_state(rng)
        prev = make_random_state(rng)
        command = rng.uniform(-1, 1, 3)
        got = R.evaluate(state, prev, command, cfg, model)
        want = oracle_terms(state, prev, command, cfg, model)
        for i, name in enumerate(R.TERM_NAMES):
            ref = want[name]
            tol = 1e-12 * max(1.0, abs(ref))
            assert abs(got.raw[i] - ref) <= tol, f"{name} case {case}: {got.raw[i]} vs {ref}"
        w = R.weights(cfg)
        assert got.total == pytest.approx(float((w * got.raw).sum()), abs=1e-12)


def test_breakdown_dict_and_weighting():
    cfg = RewardConfig()
    model = RobotModel(RobotConfig())
    rng = np.random.default_rng(1)
    state = make_random_state(rng)
    prev = make_random_state(rng)
    got = R.evaluate(state, prev, np.zeros(3), cfg, model)
    d = got.as_dict()
    assert set(d) == set(R.TERM_NAMES)
    for i, name in enumerate(R.TERM_NAMES):
        assert d[name] == pytest.approx(got.raw[i] * getattr(cfg, f"w_{name}"))


def test_mirror_invariance():
    cfg = RewardConfig()
    model = RobotModel(RobotConfig())
    rng = np.random.default_rng(2)
    flip_cmd = np.array([1.0, -1.0, -1.0])
    for _ in range(100):
        state = make_random_state(rng)
        prev = make_random_state(rng)
        command = rng.uniform(-1, 1, 3)
        a = R.evaluate(state, prev, command, cfg, model)
        b = R.evaluate(mirror_state(state), mirror_state(prev), command * flip_cmd, cfg, model)
        rel = np.abs(a.raw - b.raw) / np.maximum(np.abs(a.raw), 1.0)
        assert np.max(rel) < 1e-12, np.argmax(rel)
        assert a.total == pytest.approx(b.total, rel=1e-12, abs=1e-12)
