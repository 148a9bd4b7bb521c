"""Adaptive-moment optimizer with decoupled weight decay and cosine decay.

Matches the training contract used throughout: per-parameter first and
second moments with bias correction, weight decay applied directly to the
parameters (not through the gradient), and a learning rate following
lr * 0.5 * (1 + cos(pi * step / horizon)) down to zero at the horizon.
"""

from __future__ import annotations

import numpy as np


class AdamW:
    def __init__(
        self,
        params: list[np.ndarray],
        learning_rate: float,
        horizon: int,
        weight_decay: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.learning_rate = float(learning_rate)
        self.weight_decay = float(weight_decay)
        self.betas = betas
        self.eps = float(eps)
        self.horizon = int(horizon)
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def lr_at(self, step: int) -> float:
        frac = min(step, self.horizon) / self.horizon
        return self.learning_rate * 0.5 * (1.0 + np.cos(np.pi * frac))

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update params in place; grads must align with params."""
        if len(grads) != len(params):
            raise ValueError("grads must align with params")
        lr = self.lr_at(self.step_count)
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * ((m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * p)
