"""Discrete (alpha_t, sigma_t) noise schedules and the forward noising map.

Convention: t = 0 is clean data, t = T is maximum noise.  A variance
preserving schedule keeps alpha_t^2 + sigma_t^2 = 1 at every step, so
unit-variance data stays unit-variance along the forward process
x_t = alpha_t x_0 + sigma_t eps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VP_TOL = 1e-12

# Fraction of T padded onto the cosine denominator so that sigma_T stays
# strictly below 1 (sin(pi/2.02) ~ 0.99988) and alpha_T stays positive,
# keeping the DDIM x0-prediction division by alpha_t well defined.
PAD_FRACTION = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Tabulated (alpha_t, sigma_t) for t = 0..T."""

    num_steps: int
    alphas: np.ndarray
    sigmas: np.ndarray
    mode: str = "custom"

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        if self.mode not in ("variance_preserving", "custom"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        a = np.asarray(self.alphas, dtype=float)
        s = np.asarray(self.sigmas, dtype=float)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "sigmas", s)
        if a.shape != (self.num_steps + 1,) or s.shape != (self.num_steps + 1,):
            raise ValueError("alphas and sigmas must both have T+1 entries")
        if abs(a[0] - 1.0) > VP_TOL or abs(s[0]) > VP_TOL:
            raise ValueError("schedule must start at alpha_0 = 1, sigma_0 = 0")
        if np.any(a <= 0.0) or np.any(a > 1.0):
            raise ValueError("alphas must lie in (0, 1]")
        if np.any(s < 0.0) or np.any(s >= 1.0):
            raise ValueError("sigmas must lie in [0, 1)")
        if np.any(np.diff(a) > 0.0):
            raise ValueError("alphas must be non-increasing in t")
        if np.any(np.diff(s) < 0.0):
            raise ValueError("sigmas must be non-decreasing in t")
        if self.mode == "variance_preserving":
            vp = a**2 + s**2
            if np.max(np.abs(vp - 1.0)) > VP_TOL:
                raise ValueError("variance_preserving requires alpha^2 + sigma^2 = 1")

    def check_step(self, t: int) -> int:
        t = int(t)
        if not 0 <= t <= self.num_steps:
            raise ValueError(f"step {t} outside [0, {self.num_steps}]")
        return t


def make_vp_schedule(num_steps: int) -> NoiseSchedule:
    """Cosine variance-preserving schedule with T+1 entries.

    alpha_t = cos(pi t / ((2 + PAD_FRACTION) T)), sigma_t the matching sine.
    The padded denominator keeps sigma_T <= 0.9999.
    """
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    t = np.arange(num_steps + 1, dtype=float)
    theta = np.pi * t / ((2.0 + PAD_FRACTION) * num_steps)
    return NoiseSchedule(
        num_steps=num_steps,
        alphas=np.cos(theta),
        sigmas=np.sin(theta),
        mode="variance_preserving",
    )


def forward_noise(x0: np.ndarray, t: int, schedule: NoiseSchedule, noise: np.ndarray) -> np.ndarray:
    """x_t = alpha_t x0 + sigma_t noise, broadcasting over leading axes."""
    t = schedule.check_step(t)
    x0 = np.asarray(x0, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if x0.shape != noise.shape:
        raise ValueError(f"noise shape {noise.shape} != x0 shape {x0.shape}")
    return schedule.alphas[t] * x0 + schedule.sigmas[t] * noise
