"""Minimal MLP function approximators with reverse-mode gradients.

Fixed feed-forward graphs only: dense layers with elu / tanh / linear
activations, 64-bit floats throughout, a flat parameter-vector view, an
Adam optimizer, and a small versioned binary checkpoint format.
"""

from __future__ import annotations

import struct

import numpy as np

CHECKPOINT_MAGIC = b"PLAB"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("elu", "tanh", "linear")


def _act(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "elu":
        return np.where(x > 0, x, np.expm1(x))
    if kind == "tanh":
        return np.tanh(x)
    return x


def _act_grad(kind: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if kind == "elu":
        return np.where(x > 0, 1.0, y + 1.0)
    if kind == "tanh":
        return 1.0 - y * y
    return np.ones_like(x)


class MLP:
    """Dense multi-layer perceptron over float64 with cached backward."""

    def __init__(self, sizes, activations=None, rng: np.random.Generator | None = None):
        self.sizes = [int(s) for s in sizes]
        n_layers = len(self.sizes) - 1
        if activations is None:
            activations = ["elu"] * (n_layers - 1) + ["linear"]
        if len(activations) != n_layers:
            raise ValueError("one activation per layer required")
        for a in activations:
            if a not in _ACTIVATIONS:
                raise ValueError(f"unknown activation '{a}'")
        self.activations = list(activations)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if rng is None:
                w = np.zeros((fan_out, fan_in))
            else:
                # orthogonal-ish init scaled for elu
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))
        self._cache = None

    # -- parameter vector view -------------------------------------------
    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got {flat.shape}")
        i = 0
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[k] = flat[i : i + w.size].reshape(w.shape).copy()
            i += w.size
            self.biases[k] = flat[i : i + b.size].copy()
            i += b.size

    # -- forward / backward ----------------------------------------------
    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        """Forward pass. x is (d,) or (N, d); caches activations for backward."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input dim {h.shape[1]} != layer 0 dim {self.sizes[0]}")
        pre, post = [], [h]
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ w.T + b
            h = _act(act, z)
            pre.append(z)
            post.append(h)
        self._cache = (pre, post) if cache else None
        return h[0] if single else h

    def backward(self, grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradients of sum(grad_out * output) w.r.t. (params, input).

        Returns (flat parameter gradient, input gradient with the shape the
        forward pass received).
        """
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward")
        pre, post = self._cache
        g = np.asarray(grad_out, dtype=np.float64)
        single = g.ndim == 1
        g = g[None, :] if single else g
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for k in range(len(self.weights) - 1, -1, -1):
            g = g * _act_grad(self.activations[k], pre[k], post[k + 1])
            grads_w[k] = g.T @ post[k]
            grads_b[k] = g.sum(axis=0)
            g = g @ self.weights[k]
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb)
        return np.concatenate(parts), (g[0] if single else g)

    def copy(self) -> "MLP":
        out = MLP(self.sizes, self.activations)
        out.set_params(self.get_params())
        return out


class Adam:
    """Adam with bias correction; deterministic given the gradient stream."""

    def __init__(self, num_params: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = np.zeros(num_params)
        self.v = np.zeros(num_params)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        grads = np.asarray(grads, dtype=np.float64)
        if params.shape != self.m.shape or grads.shape != self.m.shape:
            raise ValueError("parameter/gradient shape mismatch with optimizer state")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads * grads
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- checkpoints ----------------------------------------------------------

def save_mlp(net: MLP) -> bytes:
    """Versioned binary: magic, version, layer spec, params (LE float64)."""
    spec = ",".join(str(s) for s in net.sizes) + ";" + ",".join(net.activations)
    spec_b = spec.encode()
    header = CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(spec_b)) + spec_b
    body = net.get_params().astype("<f8").tobytes()
    return header + struct.pack("<Q", net.num_params) + body


def load_mlp(blob: bytes) -> tuple[MLP, int]:
    """Rebuild an MLP from bytes; returns (net, bytes consumed)."""
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("bad checkpoint magic")
    version, spec_len = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    spec = blob[off : off + spec_len].decode()
    off += spec_len
    sizes_s, acts_s = spec.split(";")
    sizes = [int(s) for s in sizes_s.split(",")]
    acts = acts_s.split(",")
    (n_params,) = struct.unpack_from("<Q", blob, off)
    off += 8
    net = MLP(sizes, acts)
    if n_params != net.num_params:
        raise ValueError("parameter count mismatch in checkpoint")
    params = np.frombuffer(blob, dtype="<f8", count=n_params, offset=off).astype(np.float64)
    off += 8 * n_params
    net.set_params(params)
    return net, off


def save_mlp_file(net: MLP, path: str) -> None:
    with open(path, "wb") as f:
        f.write(save_mlp(net))


def load_mlp_file(path: str) -> MLP:
    with open(path, "rb") as f:
        net, _ = load_mlp(f.read())
    return net


__all__ = ["MLP", "Adam", "save_mlp", "load_mlp", "save_mlp_file", "load_mlp_file"]
