"""Small reverse-mode network core on numpy: dense layers, LSTM and GRU stacks, Adam.

Each layer keeps its parameters in an ordered ``params`` dict and implements
``forward(x) -> (y, cache)`` and ``backward(dy, cache) -> (dx, grads)``.
Networks expose a flat, ordered view of all parameters so that optimisers,
serialisation and the finite-difference checker share one layout.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

ACTIVATIONS = ("linear", "relu", "tanh")


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _uniform(rng: np.random.Generator, shape, fan_in: int, scale: float = 1.0) -> np.ndarray:
    lim = scale / np.sqrt(fan_in)
    return rng.uniform(-lim, lim, shape)


class Dense:
    def __init__(self, n_in: int, n_out: int, activation: str = "linear",
                 rng: np.random.Generator | None = None, init_scale: float | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        if init_scale is None:
            W = _uniform(rng, (n_in, n_out), n_in)
            b = _uniform(rng, (n_out,), n_in)
        else:
            W = rng.uniform(-init_scale, init_scale, (n_in, n_out))
            b = rng.uniform(-init_scale, init_scale, (n_out,))
        self.params = {"W": W, "b": b}

    def forward(self, x):
        a = x @ self.params["W"] + self.params["b"]
        if self.activation == "relu":
            y = np.maximum(a, 0.0)
        elif self.activation == "tanh":
            y = np.tanh(a)
        else:
            y = a
        return y, (x, a, y)

    def backward(self, dy, cache):
        x, a, y = cache
        if self.activation == "relu":
            da = dy * (a > 0)
        elif self.activation == "tanh":
            da = dy * (1.0 - y * y)
        else:
            da = dy
        grads = {"W": x.T @ da, "b": da.sum(axis=0)}
        return da @ self.params["W"].T, grads


class LSTMLayer:
    """Gate order ``[input, forget, cell, output]``; forget bias starts at 1."""

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        H = n_hidden
        self.n_in, self.n_hidden = n_in, H
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        self.params = {
            "W": _uniform(rng, (n_in, 4 * H), n_in),
            "U": _uniform(rng, (H, 4 * H), H),
            "b": b,
        }

    def forward(self, x):
        B, T, _ = x.shape
        H = self.n_hidden
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        xw = (x.reshape(B * T, -1) @ W).reshape(B, T, 4 * H) + b
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, T, H))
        gates = np.empty((B, T, 4 * H))
        cs = np.empty((B, T + 1, H))
        cs[:, 0] = c
        hprev = np.empty((B, T, H))
        for t in range(T):
            hprev[:, t] = h
            z = xw[:, t] + h @ U
            g = np.empty_like(z)
            g[:, :2 * H] = sigmoid(z[:, :2 * H])
            g[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
            g[:, 3 * H:] = sigmoid(z[:, 3 * H:])
            c = g[:, H:2 * H] * c + g[:, :H] * g[:, 2 * H:3 * H]
            h = g[:, 3 * H:] * np.tanh(c)
            gates[:, t] = g
            cs[:, t + 1] = c
            hs[:, t] = h
        return hs, (x, gates, cs, hprev)

    def backward(self, dhs, cache):
        x, gates, cs, hprev = cache
        B, T, _ = x.shape
        H = self.n_hidden
        W, U = self.params["W"], self.params["U"]
        dz_all = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            g = gates[:, t]
            i, f, gg, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
            c, c_prev = cs[:, t + 1], cs[:, t]
            dh = dhs[:, t] + dh_next
            tc = np.tanh(c)
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[:, t]
            dz[:, :H] = dc * gg * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
            dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ U.T
        dz_flat = dz_all.reshape(B * T, 4 * H)
        grads = {
            "W": x.reshape(B * T, -1).T @ dz_flat,
            "U": hprev.reshape(B * T, H).T @ dz_flat,
            "b": dz_flat.sum(axis=0),
        }
        dx = (dz_flat @ W.T).reshape(B, T, -1)
        return dx, grads


class GRULayer:
    """GRU with the reset gate applied before the recurrent product (Keras ``reset_after=False``).

    Gate order ``[update, reset, candidate]``; ``h' = z * h + (1 - z) * n``.
    """

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        H = n_hidden
        self.n_in, self.n_hidden = n_in, H
        self.params = {
            "W": _uniform(rng, (n_in, 3 * H), n_in),
            "U": _uniform(rng, (H, 3 * H), H),
            "b": np.zeros(3 * H),
        }

    def forward(self, x):
        B, T, _ = x.shape
        H = self.n_hidden
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        xw = (x.reshape(B * T, -1) @ W).reshape(B, T, 3 * H) + b
        h = np.zeros((B, H))
        hs = np.empty((B, T, H))
        hprev = np.empty((B, T, H))
        zr = np.empty((B, T, 2 * H))
        ns = np.empty((B, T, H))
        for t in range(T):
            hprev[:, t] = h
            g = sigmoid(xw[:, t, :2 * H] + h @ U[:, :2 * H])
            r = g[:, H:]
            n = np.tanh(xw[:, t, 2 * H:] + (r * h) @ U[:, 2 * H:])
            z = g[:, :H]
            h = z * h + (1.0 - z) * n
            zr[:, t] = g
            ns[:, t] = n
            hs[:, t] = h
        return hs, (x, zr, ns, hprev)

    def backward(self, dhs, cache):
        x, zr, ns, hprev = cache
        B, T, _ = x.shape
        H = self.n_hidden
        W, U = self.params["W"], self.params["U"]
        Uzr, Un = U[:, :2 * H], U[:, 2 * H:]
        da_all = np.empty((B, T, 3 * H))
        dU = np.zeros_like(U)
        dh_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            z, r = zr[:, t, :H], zr[:, t, H:]
            n, h = ns[:, t], hprev[:, t]
            dh = dhs[:, t] + dh_next
            dn = dh * (1.0 - z)
            da_n = dn * (1.0 - n * n)
            rh = r * h
            d_rh = da_n @ Un.T
            da_z = dh * (h - n) * z * (1.0 - z)
            da_r = d_rh * h * r * (1.0 - r)
            da = da_all[:, t]
            da[:, :H] = da_z
            da[:, H:2 * H] = da_r
            da[:, 2 * H:] = da_n
            dU[:, :2 * H] += h.T @ da[:, :2 * H]
            dU[:, 2 * H:] += rh.T @ da_n
            dh_next = dh * z + d_rh * r + da[:, :2 * H] @ Uzr.T
        da_flat = da_all.reshape(B * T, 3 * H)
        grads = {"W": x.reshape(B * T, -1).T @ da_flat, "U": dU, "b": da_flat.sum(axis=0)}
        dx = (da_flat @ W.T).reshape(B, T, -1)
        return dx, grads


CELLS = {"lstm": LSTMLayer, "gru": GRULayer}


class Network:
    """Base class: ordered parameter access shared by all models."""

    layers: list

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{k}.{name}", arr) for k, layer in enumerate(self.layers)
                for name, arr in layer.params.items()]

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(n, a.shape) for n, a in self.named_params()]

    def n_params(self) -> int:
        return sum(a.size for _, a in self.named_params())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.named_params()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params():
            raise ValueError(f"expected {self.n_params()} parameters, got {flat.size}")
        pos = 0
        for _, arr in self.named_params():
            arr[...] = flat[pos:pos + arr.size].reshape(arr.shape)
            pos += arr.size

    def flatten_grads(self, grads: list[dict]) -> np.ndarray:
        return np.concatenate([g[name].ravel() for layer, g in zip(self.layers, grads)
                               for name in layer.params])

    def copy_from(self, other: "Network") -> None:
        self.set_flat(other.get_flat())


class MLP(Network):
    def __init__(self, sizes: list[int], hidden_activation: str = "relu",
                 out_activation: str = "linear", rng: np.random.Generator | None = None,
                 final_init: float | None = None):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        rng = rng or np.random.default_rng(0)
        self.sizes = list(sizes)
        self.layers = []
        for k in range(len(sizes) - 1):
            last = k == len(sizes) - 2
            self.layers.append(Dense(sizes[k], sizes[k + 1],
                                     out_activation if last else hidden_activation, rng,
                                     init_scale=final_init if last else None))

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, dy, caches):
        grads = [None] * len(self.layers)
        for k in range(len(self.layers) - 1, -1, -1):
            dy, grads[k] = self.layers[k].backward(dy, caches[k])
        return dy, grads


class RecurrentNet(Network):
    """Stacked recurrent layers followed by a linear head on the last hidden state."""

    def __init__(self, n_in: int, n_out: int, n_layers: int, n_hidden: int, cell: str = "lstm",
                 rng: np.random.Generator | None = None, zero_head: bool = False):
        if cell not in CELLS:
            raise ValueError(f"unknown cell kind {cell!r}")
        rng = rng or np.random.default_rng(0)
        self.cell = cell
        self.layers = []
        size = n_in
        for _ in range(n_layers):
            self.layers.append(CELLS[cell](size, n_hidden, rng))
            size = n_hidden
        head = Dense(n_hidden, n_out, "linear", rng)
        if zero_head:
            head.params["W"][:] = 0.0
            head.params["b"][:] = 0.0
        self.layers.append(head)

    def forward(self, x):
        caches = []
        for layer in self.layers[:-1]:
            x, c = layer.forward(x)
            caches.append(c)
        y, c = self.layers[-1].forward(x[:, -1])
        caches.append((c, x.shape))
        return y, caches

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, dy, caches):
        grads = [None] * len(self.layers)
        head_cache, shape = caches[-1]
        dlast, grads[-1] = self.layers[-1].backward(dy, head_cache)
        dh = np.zeros(shape)
        dh[:, -1] = dlast
        for k in range(len(self.layers) - 2, -1, -1):
            dh, grads[k] = self.layers[k].backward(dh, caches[k])
        return dh, grads


class Adam:
    def __init__(self, n_params: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def apply(self, net: Network, grad: np.ndarray) -> None:
        net.set_flat(self.step(net.get_flat(), grad))


# -- gradient checking ----------------------------------------------------------------


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(net: Network, x: np.ndarray, h: float = 1e-6, rng: np.random.Generator | None = None,
               params: Iterable[int] | None = None, floor: float = 1e-4) -> float:
    """Max relative error between backprop and central differences.

    The scalar objective is ``sum(net(x) * R)`` with a fixed random ``R``, so
    every output contributes. ``params`` restricts the check to a subset of
    flat parameter indices.
    """
    rng = rng or np.random.default_rng(0)
    y, caches = net.forward(x)
    proj = rng.normal(size=y.shape)
    _, grads = net.backward(proj, caches)
    analytic = net.flatten_grads(grads)
    theta = net.get_flat()
    idx = np.arange(theta.size) if params is None else np.fromiter(params, dtype=int)

    def objective(t: np.ndarray) -> float:
        net.set_flat(t)
        return float(np.sum(net.forward(x)[0] * proj))

    numeric = np.empty(idx.size)
    try:
        for j, k in enumerate(idx):
            tp = theta.copy()
            tp[k] += h
            tm = theta.copy()
            tm[k] -= h
            numeric[j] = (objective(tp) - objective(tm)) / (2 * h)
    finally:
        net.set_flat(theta)
    return float(np.max(relative_error(analytic[idx], numeric, floor)))


def input_grad_check(fn: Callable[[np.ndarray], tuple[np.ndarray, Callable]], x: np.ndarray,
                     h: float = 1e-6, floor: float = 1e-4, seed: int = 0) -> float:
    """Same check for gradients with respect to the input of ``fn``."""
    rng = np.random.default_rng(seed)
    y, back = fn(x)
    proj = rng.normal(size=y.shape)
    analytic = back(proj)
    numeric = np.empty(x.size)
    flat = x.ravel()
    for k in range(flat.size):
        xp = flat.copy()
        xp[k] += h
        xm = flat.copy()
        xm[k] -= h
        numeric[k] = (np.sum(fn(xp.reshape(x.shape))[0] * proj) - np.sum(fn(xm.reshape(x.shape))[0] * proj)) / (2 * h)
    return float(np.max(relative_error(analytic.ravel(), numeric, floor)))
