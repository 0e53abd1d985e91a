"""Reverse- and forward-mode derivatives for a fixed tanh MLP.

The only network topology in this package is input -> tanh -> tanh ->
linear output, with all weights, biases held in one flat float64 vector.
There is no general tape: `backward` and `jvp` are written against this
exact graph so every line of the gradient math is auditable.
"""

from __future__ import annotations

import numpy as np


class MlpNet:
    """Two-hidden-layer tanh MLP over a flat parameter vector."""

    def __init__(self, in_dim: int, hidden: tuple[int, int], out_dim: int):
        if in_dim < 1 or out_dim < 1 or any(h < 1 for h in hidden):
            raise ValueError("all layer sizes must be positive")
        self.in_dim = in_dim
        self.hidden = (int(hidden[0]), int(hidden[1]))
        self.out_dim = out_dim
        dims = [in_dim, *self.hidden, out_dim]
        self.layer_shapes = [(dims[i], dims[i + 1]) for i in range(3)]
        self.n_params = sum(a * b + b for a, b in self.layer_shapes)

    # -- parameter layout -------------------------------------------------

    def unpack(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Return [(W, b)] views into the flat vector (no copies)."""
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        layers = []
        k = 0
        for a, b in self.layer_shapes:
            W = theta[k:k + a * b].reshape(a, b)
            k += a * b
            bias = theta[k:k + b]
            k += b
            layers.append((W, bias))
        return layers

    def init_params(self, rng: np.random.Generator, out_scale: float = 0.01) -> np.ndarray:
        """Scaled-uniform init; the output layer is shrunk by `out_scale`
        so fresh policies emit near-zero means."""
        theta = np.zeros(self.n_params)
        k = 0
        for i, (a, b) in enumerate(self.layer_shapes):
            scale = np.sqrt(3.0 / a) * (out_scale if i == 2 else 1.0)
            theta[k:k + a * b] = rng.uniform(-scale, scale, size=a * b)
            k += a * b + b  # biases stay zero
        return theta

    # -- forward / reverse / tangent --------------------------------------

    def forward(self, theta: np.ndarray, x: np.ndarray):
        """Return (output (B, out_dim), cache for backward/jvp)."""
        (W1, b1), (W2, b2), (W3, b3) = self.unpack(theta)
        h1 = np.tanh(x @ W1 + b1)
        h2 = np.tanh(h1 @ W2 + b2)
        out = h2 @ W3 + b3
        return out, (x, h1, h2)

    def backward(self, theta: np.ndarray, cache, dout: np.ndarray) -> np.ndarray:
        """Accumulate d(sum of dout*output)/dtheta into a flat vector."""
        (W1, b1), (W2, b2), (W3, b3) = self.unpack(theta)
        x, h1, h2 = cache
        grad = np.empty(self.n_params)
        g = self.unpack(grad)

        g[2][0][:] = h2.T @ dout
        g[2][1][:] = dout.sum(axis=0)
        dh2 = (dout @ W3.T) * (1.0 - h2 * h2)
        g[1][0][:] = h1.T @ dh2
        g[1][1][:] = dh2.sum(axis=0)
        dh1 = (dh2 @ W2.T) * (1.0 - h1 * h1)
        g[0][0][:] = x.T @ dh1
        g[0][1][:] = dh1.sum(axis=0)
        return grad

    def jvp(self, theta: np.ndarray, cache, v: np.ndarray) -> np.ndarray:
        """Directional derivative of the output along parameter tangent v."""
        (W1, b1), (W2, b2), (W3, b3) = self.unpack(theta)
        (V1, c1), (V2, c2), (V3, c3) = self.unpack(v)
        x, h1, h2 = cache
        t1 = (x @ V1 + c1) * (1.0 - h1 * h1)
        t2 = (t1 @ W2 + h1 @ V2 + c2) * (1.0 - h2 * h2)
        return t2 @ W3 + h2 @ V3 + c3
