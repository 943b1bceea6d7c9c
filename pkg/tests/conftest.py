import numpy as np
import pytest

from pimlab.config import RunConfig
from pimlab.env import SimState
from pimlab.robot import NUM_JOINTS, NUM_PROBES_PER_FOOT, RobotModel


@pytest.fixture
def cfg():
    return RunConfig()


@pytest.fixture
def model(cfg):
    return RobotModel(cfg.robot)


def make_random_state(rng: np.random.Generator, step_index: int = 10) -> SimState:
    """A finite, internally plausible (not dynamically exact) state."""
    quat = rng.normal(size=4)
    quat /= np.linalg.norm(quat)
    contact = rng.random(2) < 0.6
    force = np.abs(rng.normal(0.0, 120.0, size=(2, 3)))
    force[:, :2] = rng.normal(0.0, 40.0, size=(2, 2))
    force[~contact] = 0.0
    return SimState(
        base_pos=rng.normal(0.0, 1.0, 3) + np.array([0.0, 0.0, 1.0]),
        base_quat=quat,
        base_lin_vel=rng.normal(0.0, 0.5, 3),
        base_ang_vel=rng.normal(0.0, 0.5, 3),
        theta=rng.normal(0.0, 0.3, NUM_JOINTS),
        theta_dot=rng.normal(0.0, 1.0, NUM_JOINTS),
        theta_ddot=rng.normal(0.0, 10.0, NUM_JOINTS),
        applied_torque=rng.normal(0.0, 30.0, NUM_JOINTS),
        desired_torque=rng.normal(0.0, 60.0, NUM_JOINTS),
        pd_target=rng.normal(0.0, 0.3, NUM_JOINTS),
        action=rng.normal(0.0, 0.3, NUM_JOINTS),
        prev_action=rng.normal(0.0, 0.3, NUM_JOINTS),
        foot_pos=rng.normal(0.0, 0.3, (2, 3)),
        foot_vel=rng.normal(0.0, 0.3, (2, 3)),
        foot_contact=contact,
        foot_new_contact=contact & (rng.random(2) < 0.3),
        foot_force=force,
        probe_clearance=rng.normal(0.05, 0.05, (2, NUM_PROBES_PER_FOOT)),
        ground_z=float(rng.normal(0.0, 0.1)),
        step_index=step_index,
        command=rng.uniform(-0.5, 0.5, 3),
    )
