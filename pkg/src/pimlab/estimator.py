"""Perceptive and blind internal-model state estimators.

From the proprioceptive history (and, for the perceptive variant, the
current elevation sample) the estimator emits the next-step base linear
velocity and a unit-norm latent. The velocity head is trained by
regression to simulator ground truth; the latent is trained against a
target encoding of the next proprioceptive frame with a
swapped-assignment contrastive objective over Sinkhorn-balanced
prototype codes.
"""

from __future__ import annotations

import struct
import warnings
import zlib

import numpy as np

from .approx import MLP, Adam, load_mlp, save_mlp
from .config import EstimatorConfig
from .observe import (
    OBS_N_DIM,
    OBS_P_DIM,
    PERCEPTIVE_SCALE,
    PROPRIO_SCALE,
    flip_perceptive,
    flip_proprio,
)

VEL_DIM = 3


def sinkhorn_codes(scores: np.ndarray, epsilon: float, iterations: int) -> np.ndarray:
    """Batch-balanced soft assignments; rows (samples) sum to 1."""
    scores = np.asarray(scores, dtype=np.float64)
    n, k = scores.shape
    shifted = scores - scores.max()
    q = np.exp(shifted / epsilon).T  # (K, N)
    total = q.sum()
    if not np.isfinite(total) or total <= 0 or np.ptp(scores) < 1e-12:
        warnings.warn("degenerate sinkhorn scores; falling back to uniform codes")
        return np.full((n, k), 1.0 / k)
    q /= total
    for _ in range(iterations):
        q /= q.sum(axis=1, keepdims=True)
        q /= k
        q /= q.sum(axis=0, keepdims=True)
        q /= n
    return (q * n).T


def _normalize_rows(z: np.ndarray) -> np.ndarray:
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def _normalize_backward(z: np.ndarray, l: np.ndarray, grad_l: np.ndarray) -> np.ndarray:
    """Backprop through row-wise L2 normalization l = z / ||z||."""
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    dot = np.sum(grad_l * l, axis=-1, keepdims=True)
    return (grad_l - dot * l) / norms


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class Estimator:
    """PIM (with perceptive input) or HIM (blind) next-state estimator."""

    def __init__(self, cfg: EstimatorConfig, history: int, rng: np.random.Generator):
        if cfg.variant not in ("pim", "him"):
            raise ValueError(f"unknown estimator variant '{cfg.variant}'")
        self.cfg = cfg
        self.history = int(history)
        self.hist_dim = (self.history + 1) * OBS_N_DIM
        # the elevation sample is compressed through a small bottleneck so the
        # extra perceptive inputs do not inflate the variance of the shared
        # velocity-from-history problem
        self.perc_encoder = (
            MLP([OBS_P_DIM, 32, cfg.perc_features], ["elu", "linear"], rng=rng)
            if cfg.variant == "pim"
            else None
        )
        self.input_dim = self.hist_dim + (cfg.perc_features if cfg.variant == "pim" else 0)
        widths = list(cfg.encoder_widths)
        self.trunk = MLP([self.input_dim] + widths, ["elu"] * len(widths), rng=rng)
        self.head_v = MLP([widths[-1], VEL_DIM], ["linear"], rng=rng)
        # start the velocity head near zero so the policy is not fed large
        # random velocity estimates before the first estimator update
        self.head_v.weights[0] *= 0.01
        self.head_l = MLP([widths[-1], cfg.latent_dim], ["linear"], rng=rng)
        self.target = MLP([OBS_N_DIM] + widths + [cfg.latent_dim], ["elu"] * len(widths) + ["linear"], rng=rng)
        protos = rng.normal(size=(cfg.latent_dim, cfg.num_prototypes))
        self.prototypes = protos / np.linalg.norm(protos, axis=0, keepdims=True)
        self._adam = None

    @property
    def variant(self) -> str:
        return self.cfg.variant

    @property
    def output_dim(self) -> int:
        return VEL_DIM + self.cfg.latent_dim

    # -- inference --------------------------------------------------------
    def _scaled_parts(self, history: np.ndarray, perceptive: np.ndarray | None):
        history = np.asarray(history, dtype=np.float64)
        flat = history.reshape(*history.shape[:-2], -1) if history.ndim >= 2 and history.shape[-1] == OBS_N_DIM else history
        if flat.shape[-1] != self.hist_dim:
            raise ValueError(f"history must flatten to {self.hist_dim} values, got {flat.shape}")
        flat = flat * np.tile(PROPRIO_SCALE, self.history + 1)
        if self.cfg.variant != "pim":
            return flat, None
        if perceptive is None:
            raise ValueError("pim variant requires the perceptive sample")
        perceptive = np.asarray(perceptive, dtype=np.float64)
        return flat, perceptive * PERCEPTIVE_SCALE

    def _input(self, history: np.ndarray, perceptive: np.ndarray | None) -> np.ndarray:
        flat, perc = self._scaled_parts(history, perceptive)
        if perc is None:
            return flat
        feats = self.perc_encoder.forward(perc, cache=False)
        return np.concatenate([flat, feats], axis=-1)

    def encode(self, history: np.ndarray, perceptive: np.ndarray | None = None):
        """(v_hat, latent) for one input or a batch; latent rows are unit norm."""
        x = self._input(history, perceptive)
        h = self.trunk.forward(x, cache=False)
        v = self.head_v.forward(h, cache=False)
        z = self.head_l.forward(h, cache=False)
        return v, _normalize_rows(z)

    def target_encode(self, next_proprio: np.ndarray) -> np.ndarray:
        x = np.asarray(next_proprio, dtype=np.float64) * PROPRIO_SCALE
        z = self.target.forward(x, cache=False)
        return _normalize_rows(z)

    # -- training ---------------------------------------------------------
    def loss_and_grads(self, history, perceptive, next_proprio, v_true):
        """Velocity regression + symmetrized swapped-assignment loss.

        Returns (loss, mse, swav, grads dict keyed like parameter blocks).
        """
        cfg = self.cfg
        flat, perc = self._scaled_parts(history, perceptive)
        if perc is None:
            x = flat
        else:
            feats = self.perc_encoder.forward(perc)
            x = np.concatenate([flat, feats], axis=-1)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("batched input with at least 2 samples required")
        n = x.shape[0]
        v_true = np.asarray(v_true, dtype=np.float64)

        h = self.trunk.forward(x)
        v = self.head_v.forward(h)
        zl = self.head_l.forward(h)
        l = _normalize_rows(zl)
        zt = self.target.forward(np.asarray(next_proprio, dtype=np.float64) * PROPRIO_SCALE)
        t = _normalize_rows(zt)

        c = self.prototypes
        scores_l = l @ c
        scores_t = t @ c
        codes_t = sinkhorn_codes(scores_t, cfg.sinkhorn_epsilon, cfg.sinkhorn_iterations)
        codes_l = sinkhorn_codes(scores_l, cfg.sinkhorn_epsilon, cfg.sinkhorn_iterations)
        p_l = _softmax(scores_l / cfg.temperature)
        p_t = _softmax(scores_t / cfg.temperature)

        err = v - v_true
        mse = float(np.sum(err * err) / n)
        eps = 1e-12
        swav = -0.5 * float(
            np.sum(codes_t * np.log(p_l + eps)) + np.sum(codes_l * np.log(p_t + eps))
        ) / n
        loss = mse + cfg.contrastive_weight * swav

        g_v = 2.0 * err / n
        g_scores_l = 0.5 * cfg.contrastive_weight * (p_l - codes_t) / (cfg.temperature * n)
        g_scores_t = 0.5 * cfg.contrastive_weight * (p_t - codes_l) / (cfg.temperature * n)
        g_protos = l.T @ g_scores_l + t.T @ g_scores_t
        g_l = g_scores_l @ c.T
        g_t = g_scores_t @ c.T
        g_zl = _normalize_backward(zl, l, g_l)
        g_zt = _normalize_backward(zt, t, g_t)

        gp_head_v, g_h1 = self.head_v.backward(g_v)
        gp_head_l, g_h2 = self.head_l.backward(g_zl)
        gp_trunk, g_x = self.trunk.backward(g_h1 + g_h2)
        gp_target, _ = self.target.backward(g_zt)
        grads = {
            "trunk": gp_trunk,
            "head_v": gp_head_v,
            "head_l": gp_head_l,
            "target": gp_target,
            "prototypes": g_protos,
        }
        if perc is not None:
            gp_perc, _ = self.perc_encoder.backward(g_x[:, self.hist_dim :])
            grads["perc_encoder"] = gp_perc
        return loss, mse, swav, grads

    def _param_blocks(self):
        blocks = [
            ("trunk", self.trunk),
            ("head_v", self.head_v),
            ("head_l", self.head_l),
            ("target", self.target),
        ]
        if self.perc_encoder is not None:
            blocks.append(("perc_encoder", self.perc_encoder))
        return blocks

    def get_params(self) -> np.ndarray:
        parts = [net.get_params() for _, net in self._param_blocks()]
        parts.append(self.prototypes.ravel())
        return np.concatenate(parts)

    def set_params(self, flat: np.ndarray) -> None:
        i = 0
        for _, net in self._param_blocks():
            n = net.num_params
            net.set_params(flat[i : i + n])
            i += n
        k = self.prototypes.size
        self.prototypes = flat[i : i + k].reshape(self.prototypes.shape).copy()

    def checksum(self) -> int:
        return zlib.crc32(self.get_params().tobytes())

    def update(self, buffer: dict, rng: np.random.Generator, augment_symmetry: bool = True) -> dict:
        """Epochs of minibatch optimization over an aligned trajectory buffer.

        buffer keys: history (N, H+1, 42), perceptive (N, 96),
        next_proprio (N, 42), v_next (N, 3).
        """
        hist = np.asarray(buffer["history"], dtype=np.float64)
        perc = np.asarray(buffer["perceptive"], dtype=np.float64)
        nxt = np.asarray(buffer["next_proprio"], dtype=np.float64)
        v = np.asarray(buffer["v_next"], dtype=np.float64)
        if hist.shape[0] == 0:
            raise ValueError("empty estimator buffer")
        if augment_symmetry:
            hist = np.concatenate([hist, flip_proprio(hist)])
            perc = np.concatenate([perc, flip_perceptive(perc)])
            nxt = np.concatenate([nxt, flip_proprio(nxt)])
            v = np.concatenate([v, v * np.array([1.0, -1.0, 1.0])])
        n = hist.shape[0]
        if self._adam is None:
            self._adam = Adam(self.get_params().size, lr=self.cfg.learning_rate)
        self._adam.lr = self.cfg.learning_rate
        batch = min(self.cfg.batch_size, n)
        losses = []
        for _ in range(self.cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n - 1, batch):
                idx = order[start : start + batch]
                if idx.size < 2:
                    continue
                loss, mse, swav, grads = self.loss_and_grads(hist[idx], perc[idx], nxt[idx], v[idx])
                flat = np.concatenate(
                    [grads[name] for name, _ in self._param_blocks()] + [grads["prototypes"].ravel()]
                )
                self.set_params(self._adam.step(self.get_params(), flat))
                self.prototypes /= np.linalg.norm(self.prototypes, axis=0, keepdims=True)
                losses.append((loss, mse, swav))
        losses = np.array(losses)
        return {
            "loss": float(losses[:, 0].mean()),
            "mse": float(losses[:, 1].mean()),
            "swav": float(losses[:, 2].mean()),
        }

    # -- checkpointing ----------------------------------------------------
    def save(self) -> bytes:
        blob = b"".join(save_mlp(net) for _, net in self._param_blocks())
        proto = self.prototypes.astype("<f8").tobytes()
        header = struct.pack("<II", *self.prototypes.shape)
        return blob + header + proto

    def load(self, blob: bytes) -> None:
        off = 0
        for _, net in self._param_blocks():
            loaded, used = load_mlp(blob[off:])
            net.set_params(loaded.get_params())
            off += used
        rows, cols = struct.unpack_from("<II", blob, off)
        off += 8
        self.prototypes = (
            np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=off).reshape(rows, cols).copy()
        )


__all__ = ["Estimator", "sinkhorn_codes", "VEL_DIM"]
