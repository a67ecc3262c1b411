"""Minimal float64 neural toolkit with hand-written backpropagation.

Everything here is plain numpy: affine layers, a feed-forward net with ReLU
hidden layers, an LSTM layer unrolled over short sequences, the
reduced-parameter pointer attention head, and Adam.  Each component stores
its parameters and gradient accumulators as named arrays so optimisers,
checkpoints and finite-difference checks can walk them generically.
"""
from __future__ import annotations

import math

import numpy as np


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    k = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class Layer:
    """Base: named parameters plus parallel gradient buffers."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def _add_param(self, name: str, value: np.ndarray) -> np.ndarray:
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def named_items(self, prefix: str = "") -> list[tuple[str, np.ndarray, np.ndarray]]:
        return [(prefix + k, self.params[k], self.grads[k]) for k in sorted(self.params)]


class Linear(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.w = self._add_param("w", he_uniform(rng, (out_dim, in_dim), in_dim))
        self.b = self._add_param("b", np.zeros(out_dim))
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = np.asarray(x, dtype=float)
        return self._x @ self.w.T + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        if x.ndim == 1:
            self.grads["w"] += np.outer(dy, x)
            self.grads["b"] += dy
        else:
            self.grads["w"] += dy.T @ x
            self.grads["b"] += dy.sum(axis=0)
        return dy @ self.w


class FeedForward(Layer):
    """Affine stack with ReLU between layers; output is linear or sigmoid."""

    def __init__(self, dims: list[int], rng: np.random.Generator,
                 out_activation: str = "linear"):
        super().__init__()
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if out_activation not in ("linear", "sigmoid"):
            raise ValueError("unsupported output activation")
        self.out_activation = out_activation
        self.layers = [Linear(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
        for i, lay in enumerate(self.layers):
            for k, v in lay.params.items():
                self.params[f"l{i}.{k}"] = v
                self.grads[f"l{i}.{k}"] = lay.grads[k]
        self._relu_masks: list[np.ndarray] = []
        self._out: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._relu_masks = []
        h = np.asarray(x, dtype=float)
        for lay in self.layers[:-1]:
            h = lay.forward(h)
            mask = h > 0
            self._relu_masks.append(mask)
            h = h * mask
        h = self.layers[-1].forward(h)
        if self.out_activation == "sigmoid":
            h = sigmoid(h)
        self._out = h
        return h

    def backward(self, dy: np.ndarray) -> np.ndarray:
        d = np.asarray(dy, dtype=float)
        if self.out_activation == "sigmoid":
            d = d * self._out * (1.0 - self._out)
        d = self.layers[-1].backward(d)
        for lay, mask in zip(reversed(self.layers[:-1]), reversed(self._relu_masks)):
            d = lay.backward(d * mask)
        return d


class LSTMLayer(Layer):
    """Single LSTM over a short sequence, gates in (i, f, g, o) order.

    forward consumes the whole sequence and keeps per-step caches so
    backward can run truncated BPTT over the same unrolling.
    """

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        fan = in_dim + hidden
        self.w = self._add_param("w", he_uniform(rng, (4 * hidden, in_dim), fan))
        self.u = self._add_param("u", he_uniform(rng, (4 * hidden, hidden), fan))
        self.b = self._add_param("b", np.zeros(4 * hidden))
        self._caches: list[tuple] = []

    def forward(self, xs: np.ndarray, h0: np.ndarray, c0: np.ndarray
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (per-step hidden outputs (T, H), final h, final c)."""
        H = self.hidden
        self._caches = []
        h, c = h0, c0
        hs = np.zeros((xs.shape[0], H))
        for t in range(xs.shape[0]):
            x = xs[t]
            z = self.w @ x + self.u @ h + self.b
            i = sigmoid(z[:H])
            f = sigmoid(z[H:2 * H])
            g = np.tanh(z[2 * H:3 * H])
            o = sigmoid(z[3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            self._caches.append((x, h, c, i, f, g, o, tc))
            h, c = h_new, c_new
            hs[t] = h_new
        return hs, h, c

    def backward(self, dhs: np.ndarray, dh_final: np.ndarray | None = None,
                 dc_final: np.ndarray | None = None
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """BPTT given per-step output grads and optional final-state grads.

        Returns (dxs, dh0, dc0) and accumulates parameter grads in place.
        """
        H = self.hidden
        T = len(self._caches)
        dxs = np.zeros((T, self.w.shape[1]))
        dh = np.zeros(H) if dh_final is None else dh_final.copy()
        dc = np.zeros(H) if dc_final is None else dc_final.copy()
        for t in range(T - 1, -1, -1):
            x, h_prev, c_prev, i, f, g, o, tc = self._caches[t]
            dh = dh + dhs[t]
            dc = dc + dh * o * (1.0 - tc * tc)
            do = dh * tc
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ])
            self.grads["w"] += np.outer(dz, x)
            self.grads["u"] += np.outer(dz, h_prev)
            self.grads["b"] += dz
            dxs[t] = self.w.T @ dz
            dh = self.u.T @ dz
            dc = dc * f
        return dxs, dh, dc


class PointerAttention(Layer):
    """Reduced-parameter additive attention.

    Score of encoder row k against decoder row c:
        u[k, c] = v * sum_j tanh(w1[j]*E[k, j] + w2[j]*D[c, j])
    with w1, w2 trainable vectors and v a fixed scalar constant.
    """

    def __init__(self, hidden: int, rng: np.random.Generator, v: float = 1.0):
        super().__init__()
        self.v = float(v)
        self.w1 = self._add_param("w1", he_uniform(rng, (hidden,), hidden))
        self.w2 = self._add_param("w2", he_uniform(rng, (hidden,), hidden))
        self._cache: tuple | None = None

    def forward(self, enc: np.ndarray, dec: np.ndarray) -> np.ndarray:
        """enc (K, H), dec (C, H) -> scores (K, C)."""
        t = np.tanh(enc[:, None, :] * self.w1 + dec[None, :, :] * self.w2)
        self._cache = (enc, dec, t)
        return self.v * t.sum(axis=2)

    def backward(self, dscores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        enc, dec, t = self._cache
        g = dscores[:, :, None] * self.v * (1.0 - t * t)
        self.grads["w1"] += np.einsum("kch,kh->h", g, enc)
        self.grads["w2"] += np.einsum("kch,ch->h", g, dec)
        d_enc = np.einsum("kch,h->kh", g, self.w1)
        d_dec = np.einsum("kch,h->ch", g, self.w2)
        return d_enc, d_dec


class Adam:
    """Adam with bias correction over (param, grad) array pairs."""

    def __init__(self, items: list[tuple[str, np.ndarray, np.ndarray]],
                 lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.items = items
        self.m = {name: np.zeros_like(p) for name, p, _ in items}
        self.v = {name: np.zeros_like(p) for name, p, _ in items}

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p, g in self.items:
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def save_params(path, items: dict[str, np.ndarray]) -> None:
    """Checkpoint named tensors to a .npz archive (shapes stored per entry)."""
    np.savez(path, **items)


def load_params(path) -> dict[str, np.ndarray]:
    with np.load(path) as data:
        return {k: data[k].copy() for k in data.files}


def assign_params(items: list[tuple[str, np.ndarray, np.ndarray]],
                  loaded: dict[str, np.ndarray]) -> None:
    """Copy checkpointed tensors into live parameter arrays, shape-checked."""
    for name, p, _ in items:
        if name not in loaded:
            raise KeyError(f"checkpoint is missing tensor {name!r}")
        if loaded[name].shape != p.shape:
            raise ValueError(f"shape mismatch for {name!r}: "
                             f"{loaded[name].shape} vs {p.shape}")
        p[...] = loaded[name]
