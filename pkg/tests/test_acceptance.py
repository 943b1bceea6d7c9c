"""Acceptance suite: one test per shipped guarantee, with stated tolerances.

Each test prints a single summary line so a full run reads as a checklist.
The long-horizon training tests at the bottom dominate the runtime; the
rest of the suite completes in a couple of minutes.
"""

import os
import time

import numpy as np
import pytest

import pimlab.observe as O
from pimlab import rewards as R
from pimlab import terrain as T
from pimlab.approx import MLP
from pimlab.config import (
    ElevmapConfig,
    EstimatorConfig,
    RewardConfig,
    RobotConfig,
    RunConfig,
    TerrainConfig,
)
from pimlab.elevmap import ElevationMap, MapFrame
from pimlab.env import mirror_state
from pimlab.estimator import Estimator, sinkhorn_codes
from pimlab.robot import NUM_JOINTS, RobotModel, mirror_matrix
from pimlab.sampling import BasePose
from pimlab.trainer import Trainer

from conftest import make_random_state
from test_approx import fd_param_grad
from test_elevmap import densely_scan, grad_bound
from test_estimator import make_buffer, small_cfg
from test_rewards import TABLE_WEIGHTS, oracle_terms


def _report(tag, ok, detail):
    print(f"[{tag}] {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def test_hardware_results_substituted():
    """The published system demonstrates 15 cm stair climbing at >90%
    success on a full-size humanoid. That is a hardware result and is not
    reproducible in this desk-scale lab; the guarantees below substitute
    property and ordering checks on the same algorithmic components."""
    _report("hardware-substitution", True, "hardware claims replaced by property/ordering suites")


def test_reward_table_fidelity_under_10s():
    start = time.time()
    cfg = RewardConfig()
    model = RobotModel(RobotConfig())
    table = R.weights_table(cfg)
    assert table == TABLE_WEIGHTS
    assert len(table) == 28
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        state = make_random_state(rng)
        prev = make_random_state(rng)
        command = rng.uniform(-1, 1, 3)
        got = R.evaluate(state, prev, command, cfg, model)
        want = oracle_terms(state, prev, command, cfg, model)
        for i, name in enumerate(R.TERM_NAMES):
            rel = abs(got.raw[i] - want[name]) / max(1.0, abs(want[name]))
            worst = max(worst, rel)
    elapsed = time.time() - start
    _report(
        "reward-fidelity",
        worst < 1e-12 and elapsed < 10.0,
        f"max rel err {worst:.2e}, 28 weights exact, {elapsed:.1f}s",
    )


def test_symmetry_suite_under_30s():
    start = time.time()
    rng = np.random.default_rng(1)
    # involutions on 1000 random inputs
    for _ in range(1000):
        on = rng.normal(size=O.OBS_N_DIM)
        op = rng.normal(size=O.OBS_P_DIM)
        a = rng.normal(size=NUM_JOINTS)
        assert np.allclose(O.flip_proprio(O.flip_proprio(on)), on, atol=0)
        assert np.allclose(O.flip_perceptive(O.flip_perceptive(op)), op, atol=0)
        assert np.allclose(O.flip_action(O.flip_action(a)), a, atol=0)

    # reward invariance under joint reflection, 1e-12 relative
    cfg = RewardConfig()
    model = RobotModel(RobotConfig())
    flip_cmd = np.array([1.0, -1.0, -1.0])
    worst = 0.0
    for _ in range(200):
        s, p = make_random_state(rng), make_random_state(rng)
        c = rng.uniform(-1, 1, 3)
        ra = R.evaluate(s, p, c, cfg, model)
        rb = R.evaluate(mirror_state(s), mirror_state(p), c * flip_cmd, cfg, model)
        worst = max(worst, float(np.max(np.abs(ra.raw - rb.raw) / np.maximum(np.abs(ra.raw), 1.0))))
    assert worst < 1e-12, worst

    # mirror losses vanish for constructed equivariant policy/value
    m_act = mirror_matrix()
    g_on = O.flip_proprio(np.eye(O.OBS_N_DIM)).T
    g_op = O.flip_perceptive(np.eye(O.OBS_P_DIM)).T
    f_in = np.zeros((O.OBS_N_DIM + O.OBS_P_DIM, O.OBS_N_DIM + O.OBS_P_DIM))
    f_in[: O.OBS_N_DIM, : O.OBS_N_DIM] = g_on
    f_in[O.OBS_N_DIM :, O.OBS_N_DIM :] = g_op
    w0 = rng.normal(size=(NUM_JOINTS, f_in.shape[0]))
    w_eq = 0.5 * (w0 + m_act @ w0 @ f_in)
    v0 = rng.normal(size=(1, f_in.shape[0]))
    v_eq = 0.5 * (v0 + v0 @ f_in)
    defect_p, defect_v = 0.0, 0.0
    for _ in range(100):
        x = rng.normal(size=f_in.shape[0])
        dp = m_act @ (w_eq @ x) - w_eq @ (f_in @ x)
        dv = v_eq @ x - v_eq @ (f_in @ x)
        defect_p = max(defect_p, float(np.max(np.abs(dp))))
        defect_v = max(defect_v, float(np.max(np.abs(dv))))
    elapsed = time.time() - start
    _report(
        "symmetry-suite",
        defect_p < 1e-12 and defect_v < 1e-12 and elapsed < 30.0,
        f"reward invariance {worst:.1e}, equivariant-policy defect {defect_p:.1e}, {elapsed:.1f}s",
    )


def test_elevation_map_oracle_convergence_under_1min():
    start = time.time()
    results = []
    for kind in ("stairs_up", "slope", "platform"):
        field = T.generate_terrain(kind, 1.0, 0, TerrainConfig())
        pose = BasePose(position=(1.23, 0.01, 1.0))
        m = ElevationMap(
            MapFrame(origin=np.array([1.23, 0.01, 0.0]), rotation=np.eye(3)), ElevmapConfig()
        )
        densely_scan(m, field, (0.4, 2.1), (-0.6, 0.6), pitch=0.02, passes=3, odom=np.array([1.23, 0.01, 1.0]))
        sample = m.sample_elevation(pose)
        oracle = T.ground_truth_sample(field, pose)
        assert np.all(sample.validity)
        err = np.abs(sample.heights - oracle.heights)
        tol = grad_bound(field, pose.lattice_world_xy(), m.resolution)
        assert np.all(err <= tol), kind
        frac = float(np.mean(err < 0.5 * tol))
        assert frac >= 0.95, (kind, frac)
        results.append(f"{kind} {frac:.0%}")
    elapsed = time.time() - start
    _report(
        "elevmap-convergence",
        elapsed < 60.0,
        f"all points within bound, strictly-half fractions: {', '.join(results)}; {elapsed:.1f}s",
    )


def test_gradient_checks_under_1min():
    start = time.time()
    rng = np.random.default_rng(2)
    worst = 0.0
    for acts in (None, ["tanh", "linear"], ["elu", "tanh"]):
        net = MLP([5, 7, 4], activations=acts, rng=rng)
        for _ in range(34):
            x = rng.normal(size=(3, 5))
            go = rng.normal(size=(3, 4))
            net.forward(x)
            analytic, _ = net.backward(go)
            num = fd_param_grad(net, x, go)
            worst = max(worst, np.linalg.norm(analytic - num) / max(np.linalg.norm(num), 1e-12))
    elapsed = time.time() - start
    _report(
        "gradient-checks",
        worst < 1e-4 and elapsed < 60.0,
        f"102 random cases, max rel err {worst:.2e}, {elapsed:.1f}s",
    )


def test_sinkhorn_normalization():
    rng = np.random.default_rng(3)
    cfg = EstimatorConfig()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 257))
        latents = rng.normal(size=(n, cfg.latent_dim))
        latents /= np.linalg.norm(latents, axis=1, keepdims=True)
        protos = rng.normal(size=(cfg.latent_dim, cfg.num_prototypes))
        protos /= np.linalg.norm(protos, axis=0, keepdims=True)
        q = sinkhorn_codes(latents @ protos, cfg.sinkhorn_epsilon, cfg.sinkhorn_iterations)
        worst = max(worst, float(np.max(np.abs(q.sum(axis=1) - 1.0))))
        worst = max(worst, float(np.max(np.abs(q.sum(axis=0) - n / cfg.num_prototypes))))
    _report("sinkhorn", worst < 1e-6, f"worst marginal error {worst:.2e} after 3 iterations")


def test_estimator_ordering_synthetic():
    ratios = []
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        signal = rng.normal(0, 0.2, size=(O.OBS_P_DIM, 3))
        buf = make_buffer(rng, 512, history=2, perceptive_signal=signal)
        mse = {}
        for variant in ("pim", "him"):
            est = Estimator(
                small_cfg(variant, learning_rate=3e-3), history=2, rng=np.random.default_rng(200 + seed)
            )
            for _ in range(6):
                out = est.update(buf, np.random.default_rng(300 + seed))
            mse[variant] = out["mse"]
        ratios.append(mse["pim"] / mse["him"])
    med = float(np.median(ratios))
    _report("estimator-ordering-synthetic", med < 1.0, f"median PIM/HIM velocity MSE ratio {med:.3f} over 5 seeds")


MIXED_KINDS = ("flat", "rough", "slope", "stairs_up", "stairs_down", "gap", "platform", "stairs_up")


def _full_run(variant: str, seed: int) -> dict:
    cfg = RunConfig()
    cfg.trainer.num_envs = 8
    cfg.trainer.iterations = 500
    cfg.trainer.steps_per_env = 48
    cfg.trainer.seed = seed
    cfg.trainer.terrain_kinds = MIXED_KINDS
    cfg.estimator.variant = variant
    metrics = Trainer(cfg).train()
    return metrics[-1]


def test_estimator_ordering_full_training():
    """Perceptive vs blind internal model over full training runs:
    8 envs, 500 iterations, mixed terrains, 3 seeds per variant."""
    start = time.time()
    finals = {"pim": [], "him": []}
    for seed in range(3):
        for variant in ("pim", "him"):
            row = _full_run(variant, seed)
            finals[variant].append((row["estimation_loss"], row["terrain_level"]))
    est_p = float(np.median([f[0] for f in finals["pim"]]))
    est_h = float(np.median([f[0] for f in finals["him"]]))
    lvl_p = float(np.median([f[1] for f in finals["pim"]]))
    lvl_h = float(np.median([f[1] for f in finals["him"]]))
    elapsed = time.time() - start
    ok = est_p <= est_h and lvl_p >= lvl_h
    _report(
        "estimator-ordering-training",
        ok,
        f"median final estimation loss pim {est_p:.4f} vs him {est_h:.4f}; "
        f"median final terrain level pim {lvl_p:.3f} vs him {lvl_h:.3f}; {elapsed / 60:.0f} min",
    )


def test_flat_terrain_learning_sanity():
    """Regression baseline: the default pipeline on flat ground reaches a
    mean linear-velocity tracking reward above 0.7 within 300 iterations
    (median of 3 seeds)."""
    start = time.time()
    bests = []
    for seed in range(3):
        cfg = RunConfig()
        cfg.trainer.iterations = 300
        cfg.trainer.seed = seed
        metrics = Trainer(cfg).train()
        bests.append(max(r["rew_lin_velocity_tracking"] for r in metrics))
    med = float(np.median(bests))
    elapsed = time.time() - start
    _report(
        "flat-learning-sanity",
        med > 0.7,
        f"median best tracking reward {med:.3f} over 3 seeds (per-seed {['%.3f' % b for b in bests]}), "
        f"{elapsed / 60:.0f} min",
    )


def test_frozen_estimator_contract_full_run():
    cfg = RunConfig()
    cfg.trainer.num_envs = 2
    cfg.trainer.steps_per_env = 8
    cfg.trainer.iterations = 10
    cfg.estimator.epochs = 1
    tr = Trainer(cfg)
    checks = []
    orig = tr.ppo_update

    def audited(buf):
        before = tr.estimator.checksum()
        out = orig(buf)
        checks.append(before == tr.estimator.checksum())
        return out

    tr.ppo_update = audited
    tr.train()
    _report(
        "frozen-estimator",
        len(checks) == 10 and all(checks),
        f"checksum unchanged across {len(checks)} policy updates",
    )


def test_bit_identical_reproducibility(tmp_path):
    blobs = []
    for run in range(2):
        cfg = RunConfig()
        cfg.trainer.num_envs = 2
        cfg.trainer.steps_per_env = 8
        cfg.trainer.iterations = 3
        cfg.estimator.epochs = 1
        out = str(tmp_path / f"run{run}")
        Trainer(cfg, out).train()
        blobs.append(open(os.path.join(out, "metrics.csv"), "rb").read())
    _report("reproducibility", blobs[0] == blobs[1], f"metrics CSVs byte-identical ({len(blobs[0])} bytes)")
