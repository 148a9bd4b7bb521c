"""Dense epsilon-prediction networks with hand-written reverse-mode gradients.

The same forward/backward machinery serves the base denoiser and the weak
noise model: a plain MLP whose designated layers may carry an additive
low-rank delta W + B A (the per-step adapters of the weak model).  All
parameters and activations are float64; gradients are exact reverse-mode
accumulations, testable against central finite differences.
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("tanh", "silu")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "silu":
        return z / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    # h is the stored activation output for z so tanh' reuses it.
    if name == "tanh":
        return 1.0 - h * h
    if name == "silu":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 + z * (1.0 - s))
    raise ValueError(f"unknown activation {name!r}")


class DenseNet:
    """MLP with sizes[0] inputs, len(sizes)-2 hidden layers, linear output."""

    def __init__(self, sizes: list[int], activation: str = "tanh", seed: int = 0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = list(int(s) for s in sizes)
        self.activation = activation
        rng = np.random.default_rng(seed)
        self.weights = [
            rng.standard_normal((o, i)) / np.sqrt(i)
            for i, o in zip(self.sizes[:-1], self.sizes[1:])
        ]
        self.biases = [np.zeros(o) for o in self.sizes[1:]]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def validate(self) -> None:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i + 1], self.sizes[i]):
                raise ValueError(f"layer {i} weight shape {w.shape} breaks the chain")
            if b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} bias shape {b.shape} breaks the chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")

    def forward_cached(self, x: np.ndarray, deltas=None):
        """Forward pass keeping the per-layer inputs for backward().

        deltas, when given, is a per-layer list of (A, B) low-rank pairs
        (or None) applied as an additive B A term on that layer's weight.
        """
        x = np.asarray(x, dtype=float)
        squeezed = x.ndim == 1
        h = x[None, :] if squeezed else x
        if h.shape[-1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[-1]} != expected {self.sizes[0]}")
        hs = [h]
        zs = []
        last = self.num_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = hs[-1] @ w.T + b
            if deltas is not None and deltas[i] is not None:
                a_lr, b_lr = deltas[i]
                z = z + (hs[-1] @ a_lr.T) @ b_lr.T
            zs.append(z)
            hs.append(_act(self.activation, z) if i < last else z)
        return hs[-1][0] if squeezed else hs[-1], (hs, zs, squeezed)

    def forward(self, x: np.ndarray, deltas=None) -> np.ndarray:
        out, _ = self.forward_cached(x, deltas)
        return out

    def backward(self, cache, dout: np.ndarray, deltas=None):
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns (layer_grads, delta_grads, dx) where layer_grads is a list
        of (dW, db), delta_grads mirrors `deltas` with (dA, dB) entries.
        """
        hs, zs, squeezed = cache
        d = np.asarray(dout, dtype=float)
        if squeezed:
            d = d[None, :]
        layer_grads: list = [None] * self.num_layers
        delta_grads: list = [None] * self.num_layers
        last = self.num_layers - 1
        for i in range(last, -1, -1):
            if i < last:
                d = d * _act_grad(self.activation, zs[i], hs[i + 1])
            layer_grads[i] = (d.T @ hs[i], d.sum(axis=0))
            w_eff = self.weights[i]
            if deltas is not None and deltas[i] is not None:
                a_lr, b_lr = deltas[i]
                delta_grads[i] = ((b_lr.T @ d.T) @ hs[i], d.T @ (hs[i] @ a_lr.T))
                d = d @ w_eff + (d @ b_lr) @ a_lr
            else:
                d = d @ w_eff
        dx = d[0] if squeezed else d
        return layer_grads, delta_grads, dx


def timestep_embedding(t, num_steps: int, dim: int) -> np.ndarray:
    """Sinusoidal features of t/T at dim/2 geometrically spaced frequencies.

    Every feature lies in [-1, 1]; t may be a scalar or an array.
    """
    if dim % 2 != 0:
        raise ValueError("timestep embedding dim must be even")
    tau = np.asarray(t, dtype=float) / float(num_steps)
    freqs = np.geomspace(1.0, 100.0, dim // 2)
    angles = tau[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def assemble_input(x_t, t, cond_flat, num_steps: int, t_emb_dim: int) -> np.ndarray:
    """Concatenate x_t, the timestep embedding and a flat conditioning row."""
    x_t = np.asarray(x_t, dtype=float)
    emb = timestep_embedding(t, num_steps, t_emb_dim)
    cond_flat = np.asarray(cond_flat, dtype=float)
    if x_t.ndim == 2:
        if emb.ndim == 1:
            emb = np.broadcast_to(emb, (x_t.shape[0], t_emb_dim))
        if cond_flat.ndim == 1:
            cond_flat = np.broadcast_to(cond_flat, (x_t.shape[0], cond_flat.shape[-1]))
    return np.concatenate([x_t, emb, cond_flat], axis=-1)
