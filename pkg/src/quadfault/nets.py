"""Tiny MLP toolkit: forward/backward by hand, orthogonal init, Adam.

The networks here are fixed-topology tanh MLPs (two hidden layers in
practice), small enough that explicit reverse-mode code is simpler and
faster than pulling in an autodiff framework. All math is float64.
"""

from __future__ import annotations

import numpy as np


def orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    """Orthogonal weight matrix via QR of a Gaussian, sign-fixed, scaled by gain."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # make the decomposition unique
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_mlp(rng: np.random.Generator, sizes: list[int], out_gain: float) -> list[np.ndarray]:
    """Layer parameters [W0, b0, W1, b1, ...] with W of shape (in, out).

    Hidden layers get orthogonal init with gain sqrt(2), the output layer
    `out_gain`; biases start at zero.
    """
    params = []
    for i in range(len(sizes) - 1):
        gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        params.append(orthogonal(rng, sizes[i], sizes[i + 1], gain))
        params.append(np.zeros(sizes[i + 1]))
    return params


def mlp_forward(params: list[np.ndarray], x: np.ndarray):
    """Forward pass, tanh on hidden layers, linear output.

    x is (batch, in). Returns (out, cache) where cache holds the layer
    inputs needed by mlp_backward.
    """
    n_layers = len(params) // 2
    inputs = [x]
    h = x
    for i in range(n_layers):
        w, b = params[2 * i], params[2 * i + 1]
        h = h @ w + b
        if i < n_layers - 1:
            h = np.tanh(h)
        inputs.append(h)
    return h, inputs


def mlp_backward(params: list[np.ndarray], cache: list[np.ndarray],
                 dout: np.ndarray) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. params given d(loss)/d(output).

    cache is the list returned by mlp_forward (layer inputs, with tanh
    already applied on hidden activations). Returns grads aligned with
    params.
    """
    n_layers = len(params) // 2
    grads: list[np.ndarray | None] = [None] * len(params)
    delta = dout
    for i in reversed(range(n_layers)):
        w = params[2 * i]
        layer_in = cache[i]
        grads[2 * i] = layer_in.T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ w.T
            delta = delta * (1.0 - cache[i] ** 2)  # tanh' through the stored activation
    return grads


class Adam:
    """Adam over a flat list of parameter arrays, state kept per slot."""

    def __init__(self, shapes: list[tuple], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        """In-place update of params from grads."""
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = [np.array(a, dtype=float) for a in state["m"]]
        self.v = [np.array(a, dtype=float) for a in state["v"]]
