"""Training loop: rollout collection, PPO with symmetry losses, curricula,
and interleaved estimator updates, plus the perceptive-vs-blind harness.

Phase contract per iteration: collect (estimator and policy frozen,
snapshot reads only) -> PPO update (estimator frozen, checksummed) ->
estimator update -> curriculum advance. All randomness derives from the
run seed, so metrics are bit-identical across runs on one machine.
"""

from __future__ import annotations

import csv
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import rewards as rewards_mod
from . import terrain as terrain_mod
from .approx import MLP, Adam, load_mlp, save_mlp
from .config import RunConfig, copy_config, dump_config
from .env import MiniBiped, SimState
from .estimator import Estimator, VEL_DIM
from .observe import (
    OBS_N_DIM,
    OBS_P_DIM,
    PERCEPTIVE_SCALE,
    PROPRIO_SCALE,
    HistoryBuffer,
    assemble,
    flip_action,
    flip_perceptive,
    flip_proprio,
)


from .robot import NUM_JOINTS, mirror_matrix
from .sampling import BasePose

CHECKPOINT_MAGIC = b"PIMRUN1\x00"


def scale_obs(obs_n: np.ndarray, obs_p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fixed per-channel input conditioning for the function approximators."""
    return obs_n * PROPRIO_SCALE, obs_p * PERCEPTIVE_SCALE


def yaw_of(state: SimState) -> float:
    r = state.rot
    return float(np.arctan2(r[1, 0], r[0, 0]))


def base_pose_of(state: SimState) -> BasePose:
    return BasePose(position=tuple(state.base_pos), yaw=yaw_of(state))


@dataclass
class CurriculumState:
    arm_scale: float
    waist_scale: float
    terrain_levels: np.ndarray  # (num_envs,)

    def schedule(self, iteration: int, total: int, fraction: float) -> None:
        """Linear 0 -> 1 action-range schedule; scales never decrease."""
        ramp = max(1, int(round(total * fraction)))
        s = min(1.0, iteration / ramp)
        self.arm_scale = max(self.arm_scale, s)
        self.waist_scale = max(self.waist_scale, s)

    def apply_outcome(self, env_index: int, outcome: str, step: float) -> None:
        # crossing the finish line or surviving the whole horizon promotes;
        # falling demotes, so levels settle at the competence frontier
        lvl = self.terrain_levels[env_index]
        if outcome in ("success", "timed_out"):
            lvl += step
        elif outcome == "fallen":
            lvl -= step
        self.terrain_levels[env_index] = float(np.clip(lvl, 0.0, 1.0))


class RolloutBuffer:
    """Flat per-step storage for one collect phase; (T, E, ...) arrays."""

    def __init__(self, steps: int, envs: int, hist_dim: int, est_dim: int):
        T, E = steps, envs
        self.obs_n = np.zeros((T, E, OBS_N_DIM))
        self.obs_p = np.zeros((T, E, OBS_P_DIM))
        self.history = np.zeros((T, E, hist_dim))
        self.est_out = np.zeros((T, E, est_dim))
        self.actions = np.zeros((T, E, NUM_JOINTS))
        self.means = np.zeros((T, E, NUM_JOINTS))
        self.log_probs = np.zeros((T, E))
        self.values = np.zeros((T, E))
        self.rewards = np.zeros((T, E))
        self.dones = np.zeros((T, E), dtype=bool)
        self.v_priv = np.zeros((T, E, VEL_DIM))
        self.next_obs_n = np.zeros((T, E, OBS_N_DIM))
        self.v_next = np.zeros((T, E, VEL_DIM))
        self.transition_valid = np.zeros((T, E), dtype=bool)
        self.term_sums = np.zeros(len(rewards_mod.TERM_NAMES))
        self.advantages = None
        self.returns = None

    @property
    def size(self) -> int:
        return self.rewards.size


def compute_gae(rewards, values, dones, bootstrap, gamma: float, lam: float):
    """Generalized advantage estimates over (T, E) arrays; returns (adv, returns)."""
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    last = np.zeros_like(bootstrap)
    next_value = bootstrap
    for step in range(T - 1, -1, -1):
        not_done = ~dones[step]
        delta = rewards[step] + gamma * next_value * not_done - values[step]
        last = delta + gamma * lam * not_done * last
        adv[step] = last
        next_value = values[step]
    return adv, adv + values


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    """Scale a flat gradient vector so its L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def gaussian_log_prob(actions, means, log_std):
    std = np.exp(log_std)
    z = (actions - means) / std
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * NUM_JOINTS * np.log(2 * np.pi)


class Trainer:
    def __init__(self, cfg: RunConfig, out_dir: str | None = None):
        self.cfg = cfg
        self.out_dir = out_dir
        t = cfg.trainer
        seq = np.random.SeedSequence(t.seed)
        children = seq.spawn(4 + t.num_envs)
        self.rng_action = np.random.default_rng(children[0])
        self.rng_update = np.random.default_rng(children[1])
        self.rng_est = np.random.default_rng(children[2])
        self.rng_misc = np.random.default_rng(children[3])
        self.env_rngs = [np.random.default_rng(c) for c in children[4:]]

        self.envs = [MiniBiped(cfg.env, cfg.robot) for _ in range(t.num_envs)]
        self.estimator = Estimator(cfg.estimator, cfg.observe.history, self.rng_misc)
        self.policy_in_dim = OBS_N_DIM + OBS_P_DIM + self.estimator.output_dim
        self.value_in_dim = OBS_N_DIM + OBS_P_DIM + VEL_DIM
        pw = list(t.policy_widths)
        vw = list(t.value_widths)
        self.policy = MLP([self.policy_in_dim] + pw + [NUM_JOINTS], ["elu"] * len(pw) + ["linear"], rng=self.rng_misc)
        self.value = MLP([self.value_in_dim] + vw + [1], ["elu"] * len(vw) + ["linear"], rng=self.rng_misc)
        # shrink the output layer so initial actions are small
        self.policy.weights[-1] *= 0.01
        self.value.weights[-1] *= 0.1
        self.log_std = np.full(NUM_JOINTS, np.log(t.init_action_std))
        self.lr = t.learning_rate
        self.adam_policy = Adam(self.policy.num_params, lr=self.lr)
        self.adam_value = Adam(self.value.num_params, lr=self.lr)
        self.adam_log_std = Adam(NUM_JOINTS, lr=self.lr)
        self._mirror = mirror_matrix()

        kinds = list(t.terrain_kinds)
        self.env_kinds = [kinds[i % len(kinds)] for i in range(t.num_envs)]
        self.curriculum = CurriculumState(0.0, 0.0, np.zeros(t.num_envs))
        self.terrains = [None] * t.num_envs
        self.states = [None] * t.num_envs
        self.histories = [HistoryBuffer(cfg.observe.history) for _ in range(t.num_envs)]
        self.commands = [np.zeros(3) for _ in range(t.num_envs)]
        self.episode_steps = np.zeros(t.num_envs, dtype=np.int64)
        self.episode_lengths: list = []
        self.outcomes: list = []
        self._reset_counter = 0
        for e in range(t.num_envs):
            self._reset_env(e)

    # -- per-env plumbing --------------------------------------------------
    def _sample_command(self, e: int) -> np.ndarray:
        c = self.cfg.commands
        rng = self.env_rngs[e]
        return np.array(
            [
                rng.uniform(*c.vx_range),
                rng.uniform(*c.vy_range),
                rng.uniform(*c.yaw_rate_range),
            ]
        )

    def _reset_env(self, e: int) -> None:
        level = float(self.curriculum.terrain_levels[e])
        self.terrains[e] = terrain_mod.generate_terrain(
            self.env_kinds[e], level, self.cfg.terrain.seed + e, self.cfg.terrain
        )
        self.commands[e] = self._sample_command(e)
        self._reset_counter += 1
        self.envs[e].set_action_scales(self.curriculum.arm_scale, self.curriculum.waist_scale)
        state = self.envs[e].reset(self.terrains[e], self.commands[e], seed=self._reset_counter)
        self.states[e] = state
        frame = self._observe(e, state)
        self.histories[e].reset(frame.obs_n)
        self.episode_steps[e] = 0

    def _observe(self, e: int, state: SimState):
        sample = terrain_mod.ground_truth_sample(self.terrains[e], base_pose_of(state))
        return assemble(state, self.commands[e], sample, noise=self.cfg.observe, rng=self.env_rngs[e])

    def _net_obs(self, obs_n: np.ndarray, obs_p: np.ndarray):
        """Scaled network inputs; the blind variant is a fully blind system,
        so its policy and value see a zeroed elevation sample."""
        on, op = scale_obs(obs_n, obs_p)
        if self.estimator.variant != "pim":
            op = np.zeros_like(op)
        return on, op

    # -- collect -----------------------------------------------------------
    def collect(self, steps: int) -> RolloutBuffer:
        t = self.cfg.trainer
        E = t.num_envs
        buf = RolloutBuffer(steps, E, self.estimator.hist_dim, self.estimator.output_dim)
        self.episode_lengths = []
        self.outcomes = []
        for e in range(E):
            self.envs[e].set_action_scales(self.curriculum.arm_scale, self.curriculum.waist_scale)
        for step in range(steps):
            frames = [self._observe(e, self.states[e]) for e in range(E)]
            for e in range(E):
                self.histories[e].push(frames[e].obs_n)
            obs_n = np.stack([f.obs_n for f in frames])
            obs_p = np.stack([f.obs_p for f in frames])
            hist = np.stack([h.flat() for h in self.histories])
            est_v, est_l = self.estimator.encode(hist, obs_p if self.estimator.variant == "pim" else None)
            est_out = np.concatenate([est_v, est_l], axis=1)
            obs_n_s, obs_p_s = self._net_obs(obs_n, obs_p)
            policy_in = np.concatenate([obs_n_s, obs_p_s, est_out], axis=1)
            means = self.policy.forward(policy_in, cache=False)
            std = np.exp(self.log_std)
            actions = means + std * self.rng_action.standard_normal(means.shape)
            log_probs = gaussian_log_prob(actions, means, self.log_std)
            v_priv = np.stack([self.envs[e].privileged(self.states[e]) for e in range(E)])
            value_in = np.concatenate([obs_n_s, obs_p_s, v_priv], axis=1)
            values = self.value.forward(value_in, cache=False)[:, 0]

            buf.obs_n[step] = obs_n
            buf.obs_p[step] = obs_p
            buf.history[step] = hist
            buf.est_out[step] = est_out
            buf.actions[step] = actions
            buf.means[step] = means
            buf.log_probs[step] = log_probs
            buf.values[step] = values
            buf.v_priv[step] = v_priv

            for e in range(E):
                prev_state = self.states[e]
                new_state = self.envs[e].step(prev_state, actions[e], self.terrains[e])
                breakdown = rewards_mod.evaluate(
                    new_state, prev_state, self.commands[e], self.cfg.rewards, self.envs[e].model
                )
                buf.term_sums += breakdown.weighted
                reward = breakdown.total
                if self.cfg.rewards.only_positive_total:
                    reward = max(reward, 0.0)
                self.episode_steps[e] += 1
                status = self.envs[e].termination(new_state)
                done = status != "alive"
                crossed = new_state.base_pos[0] >= self.cfg.env.finish_x
                buf.v_next[step, e] = self.envs[e].privileged(new_state)
                next_frame = self._observe(e, new_state)
                buf.next_obs_n[step, e] = next_frame.obs_n
                buf.transition_valid[step, e] = not done
                if done:
                    if status == "timed_out":
                        # bootstrap through the horizon cut
                        tn, tp = self._net_obs(next_frame.obs_n, next_frame.obs_p)
                        tail_in = np.concatenate([tn, tp, self.envs[e].privileged(new_state)])
                        reward += t.gamma * float(self.value.forward(tail_in, cache=False)[0])
                    outcome = "success" if (crossed and status != "fallen") else status
                    self.outcomes.append((e, outcome))
                    self.episode_lengths.append(int(self.episode_steps[e]))
                    self._reset_env(e)
                else:
                    if crossed:
                        # traversal success before timeout: promote and respawn
                        self.outcomes.append((e, "success"))
                        self.episode_lengths.append(int(self.episode_steps[e]))
                        done = True
                        self._reset_env(e)
                    else:
                        self.states[e] = new_state
                buf.rewards[step, e] = reward
                buf.dones[step, e] = done
        self._compute_gae(buf)
        return buf

    def _compute_gae(self, buf: RolloutBuffer) -> None:
        t = self.cfg.trainer
        E = t.num_envs
        # bootstrap with the critic on the live states
        frames = [self._observe(e, self.states[e]) for e in range(E)]
        obs_n, obs_p = self._net_obs(np.stack([f.obs_n for f in frames]), np.stack([f.obs_p for f in frames]))
        v_priv = np.stack([self.envs[e].privileged(self.states[e]) for e in range(E)])
        bootstrap = self.value.forward(np.concatenate([obs_n, obs_p, v_priv], axis=1), cache=False)[:, 0]
        buf.advantages, buf.returns = compute_gae(
            buf.rewards, buf.values, buf.dones, bootstrap, t.gamma, t.gae_lambda
        )

    # -- PPO update --------------------------------------------------------
    def ppo_update(self, buf: RolloutBuffer) -> dict:
        t = self.cfg.trainer
        checksum_before = self.estimator.checksum()
        T, E = buf.rewards.shape
        n = T * E

        obs_n = buf.obs_n.reshape(n, -1)
        obs_p = buf.obs_p.reshape(n, -1)
        hist = buf.history.reshape(n, -1)
        est_out = buf.est_out.reshape(n, -1)
        actions = buf.actions.reshape(n, -1)
        old_means = buf.means.reshape(n, -1)
        old_log_probs = buf.log_probs.reshape(n)
        values_old = buf.values.reshape(n)
        adv = buf.advantages.reshape(n)
        returns = buf.returns.reshape(n)
        v_priv = buf.v_priv.reshape(n, -1)

        adv_std = adv.std()
        if adv_std < 1e-8:
            import warnings

            warnings.warn("degenerate advantage variance; normalization skipped")
            adv_n = adv - adv.mean()
        else:
            adv_n = (adv - adv.mean()) / adv_std

        obs_n_s, obs_p_s = self._net_obs(obs_n, obs_p)
        policy_in = np.concatenate([obs_n_s, obs_p_s, est_out], axis=1)
        value_in = np.concatenate([obs_n_s, obs_p_s, v_priv], axis=1)

        # flipped inputs for the symmetry losses; estimator is frozen, so
        # its outputs on flipped inputs are precomputable
        obs_n_f = flip_proprio(obs_n)
        obs_p_f = flip_perceptive(obs_p)
        hist_f = flip_proprio(hist.reshape(n, -1, OBS_N_DIM)).reshape(n, -1)
        est_v_f, est_l_f = self.estimator.encode(hist_f, obs_p_f if self.estimator.variant == "pim" else None)
        obs_n_fs, obs_p_fs = self._net_obs(obs_n_f, obs_p_f)
        policy_in_f = np.concatenate([obs_n_fs, obs_p_fs, est_v_f, est_l_f], axis=1)
        v_priv_f = v_priv * np.array([1.0, -1.0, 1.0])
        value_in_f = np.concatenate([obs_n_fs, obs_p_fs, v_priv_f], axis=1)

        stats = {"policy_loss": 0.0, "value_loss": 0.0, "sym_policy": 0.0, "sym_value": 0.0, "kl": 0.0}
        count = 0
        old_log_std = self.log_std.copy()
        batch = n // t.minibatches
        for _ in range(t.epochs):
            order = self.rng_update.permutation(n)
            for mb in range(t.minibatches):
                idx = order[mb * batch : (mb + 1) * batch]
                m = idx.size
                means = self.policy.forward(policy_in[idx])
                log_probs = gaussian_log_prob(actions[idx], means, self.log_std)
                ratio = np.exp(log_probs - old_log_probs[idx])
                a = adv_n[idx]
                unclipped = ratio * a
                clipped = np.clip(ratio, 1 - t.clip_epsilon, 1 + t.clip_epsilon) * a
                use_unclipped = unclipped <= clipped
                policy_loss = -np.mean(np.minimum(unclipped, clipped))

                std = np.exp(self.log_std)
                z = (actions[idx] - means) / std
                # d(-surrogate)/d mean via the active branch only
                g_logp_scale = np.where(use_unclipped, ratio * a, 0.0) * (-1.0 / m)
                g_mean = g_logp_scale[:, None] * (z / std)
                g_log_std_pg = np.sum(g_logp_scale[:, None] * (z * z - 1.0), axis=0)
                # entropy bonus: H = sum(log_std) + const
                g_log_std = g_log_std_pg - t.entropy_coef * np.ones(NUM_JOINTS)

                # policy symmetry loss through both branches
                d_sym = means @ self._mirror.T
                grads_p, _ = self.policy.backward(g_mean)
                means_f = self.policy.forward(policy_in_f[idx])
                diff = d_sym - means_f
                sym_pol = float(np.mean(diff * diff))
                coeff = 2.0 * t.symmetry_weight_policy / diff.size
                grads_p_f, _ = self.policy.backward(-coeff * diff)
                # re-forward original to backprop the first symmetry branch
                self.policy.forward(policy_in[idx])
                grads_p_sym, _ = self.policy.backward(coeff * (diff @ self._mirror))
                grads_policy = grads_p + grads_p_f + grads_p_sym

                v_pred = self.value.forward(value_in[idx])[:, 0]
                v_err = v_pred - returns[idx]
                value_loss = float(np.mean(v_err * v_err))
                grads_v, _ = self.value.backward((2.0 / m) * v_err[:, None])
                v_pred_f = self.value.forward(value_in_f[idx])[:, 0]
                v_diff = v_pred - v_pred_f
                sym_val = float(np.mean(v_diff * v_diff))
                coeff_v = 2.0 * t.symmetry_weight_value / m
                grads_v_f, _ = self.value.backward(-coeff_v * v_diff[:, None])
                self.value.forward(value_in[idx])
                grads_v_sym, _ = self.value.backward(coeff_v * v_diff[:, None])
                grads_value = grads_v + grads_v_f + grads_v_sym

                # analytic KL(old || new) between diagonal gaussians
                var_o = np.exp(2.0 * old_log_std)
                var_n = np.exp(2.0 * self.log_std)
                mu_d = old_means[idx] - means
                kl = float(
                    np.mean(
                        np.sum(
                            self.log_std - old_log_std + (var_o + mu_d * mu_d) / (2.0 * var_n) - 0.5,
                            axis=-1,
                        )
                    )
                )
                if t.desired_kl > 0:
                    if kl > 2.0 * t.desired_kl:
                        self.lr = max(1e-5, self.lr / 1.5)
                    elif kl < t.desired_kl / 2.0 and kl > 0.0:
                        self.lr = min(t.lr_max, self.lr * 1.5)
                self.adam_policy.lr = self.lr
                self.adam_value.lr = self.lr
                self.adam_log_std.lr = self.lr
                grads_policy = clip_grad_norm(grads_policy, t.max_grad_norm)
                grads_value = clip_grad_norm(grads_value, t.max_grad_norm)
                self.policy.set_params(self.adam_policy.step(self.policy.get_params(), grads_policy))
                self.value.set_params(self.adam_value.step(self.value.get_params(), grads_value))
                self.log_std = self.adam_log_std.step(self.log_std, g_log_std)
                self.log_std = np.clip(self.log_std, np.log(0.05), np.log(1.0))

                stats["policy_loss"] += policy_loss
                stats["value_loss"] += value_loss
                stats["sym_policy"] += sym_pol
                stats["sym_value"] += sym_val
                stats["kl"] += kl
                count += 1
        for k in stats:
            stats[k] /= max(count, 1)
        if self.estimator.checksum() != checksum_before:
            raise RuntimeError("estimator parameters changed during PPO update")
        return stats

    # -- curriculum --------------------------------------------------------
    def advance_curriculum(self, iteration: int) -> None:
        t = self.cfg.trainer
        self.curriculum.schedule(iteration + 1, t.iterations, t.curriculum_fraction)
        for (e, outcome) in self.outcomes:
            self.curriculum.apply_outcome(e, outcome, t.terrain_step)

    # -- estimator interleave ---------------------------------------------
    def estimator_update(self, buf: RolloutBuffer) -> dict:
        mask = buf.transition_valid.reshape(-1)
        hist = buf.history.reshape(buf.rewards.size, -1)[mask]
        perc = buf.obs_p.reshape(buf.rewards.size, -1)[mask]
        nxt = buf.next_obs_n.reshape(buf.rewards.size, -1)[mask]
        v_next = buf.v_next.reshape(buf.rewards.size, -1)[mask]
        if hist.shape[0] < 4:
            return {"loss": np.nan, "mse": np.nan, "swav": np.nan}
        hist3 = hist.reshape(hist.shape[0], self.cfg.observe.history + 1, OBS_N_DIM)
        return self.estimator.update(
            {"history": hist3, "perceptive": perc, "next_proprio": nxt, "v_next": v_next},
            self.rng_est,
        )

    def estimation_loss(self, buf: RolloutBuffer) -> float:
        """Mean squared error between estimated and realized next-step velocity."""
        mask = buf.transition_valid.reshape(-1)
        if mask.sum() == 0:
            return float("nan")
        est_v = buf.est_out.reshape(buf.rewards.size, -1)[mask, :VEL_DIM]
        v_next = buf.v_next.reshape(buf.rewards.size, -1)[mask]
        err = est_v - v_next
        return float(np.mean(np.sum(err * err, axis=1)))

    def symmetry_defect(self, buf: RolloutBuffer, max_rows: int = 256) -> float:
        n = buf.rewards.size
        rows = min(max_rows, n)
        obs_n = buf.obs_n.reshape(n, -1)[:rows]
        obs_p = buf.obs_p.reshape(n, -1)[:rows]
        hist = buf.history.reshape(n, -1)[:rows]
        est = buf.est_out.reshape(n, -1)[:rows]
        obs_n_s, obs_p_s = self._net_obs(obs_n, obs_p)
        mean = self.policy.forward(np.concatenate([obs_n_s, obs_p_s, est], axis=1), cache=False)
        obs_n_f = flip_proprio(obs_n)
        obs_p_f = flip_perceptive(obs_p)
        hist_f = flip_proprio(hist.reshape(rows, -1, OBS_N_DIM)).reshape(rows, -1)
        ev, el = self.estimator.encode(hist_f, obs_p_f if self.estimator.variant == "pim" else None)
        obs_n_fs, obs_p_fs = self._net_obs(obs_n_f, obs_p_f)
        mean_f = self.policy.forward(np.concatenate([obs_n_fs, obs_p_fs, ev, el], axis=1), cache=False)
        d = flip_action(mean) - mean_f
        return float(np.mean(d * d))

    # -- full loop ---------------------------------------------------------
    def train(self, progress: bool = False) -> list[dict]:
        t = self.cfg.trainer
        metrics = []
        if self.out_dir:
            os.makedirs(self.out_dir, exist_ok=True)
            dump_config(self.cfg, os.path.join(self.out_dir, "config.yaml"))
        for iteration in range(t.iterations):
            buf = self.collect(t.steps_per_env)
            est_loss = self.estimation_loss(buf)
            stats = self.ppo_update(buf)
            est_stats = self.estimator_update(buf)
            self.advance_curriculum(iteration)
            row = {
                "iteration": iteration,
                "reward_total": float(buf.rewards.mean()),
                "estimation_loss": est_loss,
                "estimator_train_loss": est_stats["loss"],
                "terrain_level": float(self.curriculum.terrain_levels.mean()),
                "episode_length": float(np.mean(self.episode_lengths)) if self.episode_lengths else float(t.steps_per_env),
                "symmetry_defect": self.symmetry_defect(buf),
                "arm_scale": self.curriculum.arm_scale,
                "lr": self.lr,
                "kl": stats["kl"],
                "value_loss": stats["value_loss"],
            }
            per_step = buf.term_sums / buf.size
            for name, val in zip(rewards_mod.TERM_NAMES, per_step):
                row[f"rew_{name}"] = float(val)
            metrics.append(row)
            if progress and iteration % 10 == 0:
                print(
                    f"iter {iteration:4d} reward {row['reward_total']:+.3f} "
                    f"track {row['rew_lin_velocity_tracking']:.3f} est {est_loss:.4f} "
                    f"level {row['terrain_level']:.2f}"
                )
            if self.out_dir and t.checkpoint_every and (iteration + 1) % t.checkpoint_every == 0:
                self.save_checkpoint(os.path.join(self.out_dir, f"ckpt_{iteration + 1:06d}.bin"))
        if self.out_dir:
            self.save_checkpoint(os.path.join(self.out_dir, "ckpt_final.bin"))
            write_metrics(metrics, os.path.join(self.out_dir, "metrics.csv"))
        return metrics

    # -- checkpoints -------------------------------------------------------
    def save_checkpoint(self, path: str) -> None:
        sections = [
            save_mlp(self.policy),
            save_mlp(self.value),
            self.log_std.astype("<f8").tobytes(),
            self.estimator.save(),
        ]
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<I", len(sections)))
            for s in sections:
                f.write(struct.pack("<Q", len(s)))
                f.write(s)

    def load_checkpoint(self, path: str) -> None:
        with open(path, "rb") as f:
            blob = f.read()
        if blob[:8] != CHECKPOINT_MAGIC:
            raise ValueError("bad run checkpoint magic")
        (n_sections,) = struct.unpack_from("<I", blob, 8)
        off = 12
        sections = []
        for _ in range(n_sections):
            (ln,) = struct.unpack_from("<Q", blob, off)
            off += 8
            sections.append(blob[off : off + ln])
            off += ln
        policy, _ = load_mlp(sections[0])
        value, _ = load_mlp(sections[1])
        self.policy.set_params(policy.get_params())
        self.value.set_params(value.get_params())
        self.log_std = np.frombuffer(sections[2], dtype="<f8").copy()
        self.estimator.load(sections[3])

    def policy_checksum(self) -> int:
        return zlib.crc32(self.policy.get_params().tobytes())


def write_metrics(metrics: list[dict], path: str) -> None:
    if not metrics:
        return
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(metrics[0].keys()))
        writer.writeheader()
        writer.writerows(metrics)


def train(cfg: RunConfig, out_dir: str | None = None, progress: bool = False) -> list[dict]:
    return Trainer(cfg, out_dir).train(progress=progress)


def compare_him_pim(cfg: RunConfig, out_dir: str, progress: bool = False) -> str:
    """Two full runs differing only in estimator variant; aligned CSV report."""
    os.makedirs(out_dir, exist_ok=True)
    results = {}
    for variant in ("pim", "him"):
        vcfg = copy_config(cfg)
        vcfg.estimator.variant = variant
        sub = os.path.join(out_dir, variant)
        results[variant] = train(vcfg, sub, progress=progress)
    path = os.path.join(out_dir, "compare.csv")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["iteration", "pim_estimation_loss", "him_estimation_loss", "pim_terrain_level", "him_terrain_level"]
        )
        for rp, rh in zip(results["pim"], results["him"]):
            writer.writerow(
                [rp["iteration"], rp["estimation_loss"], rh["estimation_loss"], rp["terrain_level"], rh["terrain_level"]]
            )
    return path


__all__ = [
    "Trainer",
    "RolloutBuffer",
    "CurriculumState",
    "train",
    "compare_him_pim",
    "compute_gae",
    "write_metrics",
    "gaussian_log_prob",
    "base_pose_of",
]
