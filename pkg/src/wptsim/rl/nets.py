"""Small fully-connected networks with manual forward/backward passes.

Everything runs in float64 numpy. Besides the usual reverse-mode gradient,
the MLP exposes an exact forward-mode directional derivative (``jvp``),
which the trust-region step uses for Gauss-Newton Fisher-vector products.
"""

from __future__ import annotations

import numpy as np


class Mlp:
    """tanh-activated hidden layers, linear output."""

    def __init__(self, sizes, rng: np.random.Generator, out_scale: float = 1.0):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        last = len(self.sizes) - 2
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            w = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
            if k == last:
                w = w * out_scale
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))
        self._activations: list[np.ndarray] | None = None

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        offset = 0
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[k] = flat[offset:offset + w.size].reshape(w.shape).copy()
            offset += w.size
            self.biases[k] = flat[offset:offset + b.size].copy()
            offset += b.size

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        a = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [a]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if k == last else np.tanh(z)
            acts.append(a)
        if cache:
            self._activations = acts
        return a

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Flat parameter gradient of sum(grad_out * outputs) over the batch.

        Requires a preceding forward(cache=True) on the same inputs.
        """
        if self._activations is None:
            raise RuntimeError("backward called without a cached forward pass")
        acts = self._activations
        g = np.atleast_2d(np.asarray(grad_out, dtype=float))
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w[k] = acts[k].T @ g
            grads_b[k] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.weights[k].T) * (1.0 - acts[k] ** 2)
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb)
        return np.concatenate(parts)

    def jvp(self, x: np.ndarray, tangent: np.ndarray) -> np.ndarray:
        """Directional derivative of the outputs along a flat parameter tangent."""
        tangent = np.asarray(tangent, dtype=float)
        offset = 0
        d_ws, d_bs = [], []
        for w, b in zip(self.weights, self.biases):
            d_ws.append(tangent[offset:offset + w.size].reshape(w.shape))
            offset += w.size
            d_bs.append(tangent[offset:offset + b.size])
            offset += b.size
        a = np.atleast_2d(np.asarray(x, dtype=float))
        da = np.zeros_like(a)
        last = len(self.weights) - 1
        for k, (w, b, dw, db) in enumerate(zip(self.weights, self.biases, d_ws, d_bs)):
            z = a @ w + b
            dz = a @ dw + da @ w + db
            if k == last:
                a, da = z, dz
            else:
                a = np.tanh(z)
                da = (1.0 - a**2) * dz
        return da


class Adam:
    """Flat-vector Adam with persistent moments."""

    def __init__(self, n_params: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Parameter update to subtract for the given gradient."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
