"""Stage III: guidance combinators, DDIM stepping/inversion and samplers.

Slow mode combines the weak prediction with the guided strong prediction,
eps = eps_weak + omega_w2s (eps_strong - eps_weak), costing two base
evaluations plus one weak evaluation per step; fast mode uses the weak
prediction alone on top of a single unconditional base evaluation.  The
zigzag sampler interleaves a slow step, a fast-mode inversion and a plain
guided step.  Exact function-evaluation counters are kept throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gmm as gmm_mod
from .denoiser import cfg_eval
from .schedule import NoiseSchedule

MODES = ("slow", "fast")
STRONG_SOURCES = ("trained_net", "oracle", "external_net")
WEAK_SOURCES = ("reflect_model", "external_net")


@dataclass
class GuidanceConfig:
    omega_cfg: float = 2.0
    omega_w2s: float = 1.5
    strong_source: str = "trained_net"
    weak_source: str = "reflect_model"

    def __post_init__(self):
        if not (np.isfinite(self.omega_cfg) and np.isfinite(self.omega_w2s)):
            raise ValueError("guidance scales must be finite")
        if self.strong_source not in STRONG_SOURCES:
            raise ValueError(f"unknown strong source {self.strong_source!r}")
        if self.weak_source not in WEAK_SOURCES:
            raise ValueError(f"unknown weak source {self.weak_source!r}")


class ModeSchedule:
    """Per-step slow/fast assignment, stored for t = T down to 1."""

    def __init__(self, modes):
        modes = tuple(modes)
        if any(m not in MODES for m in modes):
            raise ValueError("modes must be 'slow' or 'fast'")
        if not modes:
            raise ValueError("mode schedule cannot be empty")
        self.modes = modes

    def __len__(self):
        return len(self.modes)

    def mode_at(self, t: int) -> str:
        T = len(self.modes)
        if not 1 <= t <= T:
            raise ValueError(f"step {t} outside [1, {T}]")
        return self.modes[T - t]

    @property
    def slow_steps(self) -> int:
        return sum(m == "slow" for m in self.modes)

    @classmethod
    def all_slow(cls, T: int) -> "ModeSchedule":
        return cls(("slow",) * T)

    @classmethod
    def all_fast(cls, T: int) -> "ModeSchedule":
        return cls(("fast",) * T)

    @classmethod
    def leading_slow(cls, T: int, slow_count: int | None = None) -> "ModeSchedule":
        """Slow for the first `slow_count` steps from t = T down (default
        ceil(T/2), the early/late split), fast for the remainder."""
        if slow_count is None:
            slow_count = (T + 1) // 2
        if not 0 <= slow_count <= T:
            raise ValueError("slow_count outside [0, T]")
        return cls(("slow",) * slow_count + ("fast",) * (T - slow_count))

    @classmethod
    def from_spec(cls, spec: str, T: int) -> "ModeSchedule":
        """Parse 'all-slow', 'all-fast', 'default', 'slow:<k>' or an
        explicit comma list of modes of length T."""
        spec = spec.strip()
        if spec == "all-slow":
            return cls.all_slow(T)
        if spec == "all-fast":
            return cls.all_fast(T)
        if spec == "default":
            return cls.leading_slow(T)
        if spec.startswith("slow:"):
            return cls.leading_slow(T, int(spec.split(":", 1)[1]))
        modes = tuple(m.strip() for m in spec.split(","))
        if len(modes) != T:
            raise ValueError(f"explicit mode list has {len(modes)} entries, need {T}")
        return cls(modes)


@dataclass
class NfeCounter:
    base_cond_evals: int = 0
    base_uncond_evals: int = 0
    weak_evals: int = 0

    @property
    def base_evals(self) -> int:
        return self.base_cond_evals + self.base_uncond_evals


def w2s_combine(eps_weak: np.ndarray, eps_strong: np.ndarray, omega_w2s: float) -> np.ndarray:
    """eps_weak + omega_w2s (eps_strong - eps_weak); 0 and 1 are exact."""
    eps_weak = np.asarray(eps_weak, dtype=float)
    eps_strong = np.asarray(eps_strong, dtype=float)
    if eps_weak.shape != eps_strong.shape:
        raise ValueError("weak/strong length mismatch")
    if omega_w2s == 1.0:
        return eps_strong.copy()
    if omega_w2s == 0.0:
        return eps_weak.copy()
    return eps_weak + omega_w2s * (eps_strong - eps_weak)


def ddim_step(x_t: np.ndarray, eps: np.ndarray, t: int, s: int,
              schedule: NoiseSchedule) -> np.ndarray:
    """Deterministic update x_s = alpha_s (x_t - sigma_t eps)/alpha_t + sigma_s eps."""
    t = schedule.check_step(t)
    s = schedule.check_step(s)
    if s >= t:
        raise ValueError(f"target step {s} must precede source step {t}")
    a_t = schedule.alphas[t]
    if a_t == 0.0:
        raise ValueError("alpha_t = 0 leaves the x0-prediction undefined")
    return schedule.alphas[s] * (x_t - schedule.sigmas[t] * eps) / a_t + schedule.sigmas[s] * eps


def ddim_invert(x_s: np.ndarray, eps: np.ndarray, s: int, t: int,
                schedule: NoiseSchedule) -> np.ndarray:
    """Algebraic inverse of ddim_step under the same eps."""
    t = schedule.check_step(t)
    s = schedule.check_step(s)
    if s >= t:
        raise ValueError(f"source step {s} must precede target step {t}")
    a_s = schedule.alphas[s]
    if a_s == 0.0:
        raise ValueError("alpha_s = 0 leaves the x0-prediction undefined")
    return schedule.alphas[t] * (x_s - schedule.sigmas[s] * eps) / a_s + schedule.sigmas[t] * eps


class ReflectWeak:
    """Weak source backed by a trained reflect model.

    The model reads the unconditional base prediction and the compressed
    conditioning row; x_t is accepted (and ignored) so oracle-backed weak
    sources can share the interface.
    """

    def __init__(self, model, embeddings):
        self.model = model
        self.embeddings = embeddings

    def predict(self, eps_uncond, x_t, label, t):
        cond = self.embeddings.compressed_flat(label)
        return self.model.forward(eps_uncond, cond, t)


class OracleCondWeak:
    """Weak source that returns the exact conditional oracle (ignores
    eps_uncond); used for bit-for-bit consistency checks."""

    def __init__(self, gmm: gmm_mod.Gmm, schedule: NoiseSchedule):
        self.gmm = gmm
        self.schedule = schedule

    def predict(self, eps_uncond, x_t, label, t):
        return gmm_mod.eps_oracle(self.gmm, self.schedule, t, x_t, label)


@dataclass
class SamplerBundle:
    strong: object           # EpsSource: .predict(x_t, t, label)
    weak: object             # weak source: .predict(eps_uncond, x_t, label, t)
    schedule: NoiseSchedule
    guidance: GuidanceConfig
    modes: ModeSchedule

    def __post_init__(self):
        if len(self.modes) != self.schedule.num_steps:
            raise ValueError("mode schedule length must equal num_steps")


def _init_state(seed: int, batch: int, dim: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((batch, dim))


def sample(bundle: SamplerBundle, label: int, seed: int, batch: int = 1,
           record_trace: bool = False):
    """Run the slow/fast mode-scheduled sampler from x_T ~ N(0, I).

    Returns (x0 of shape (batch, dim), NfeCounter, trace); the counter
    counts per-trajectory model invocations (batched rows share them).
    """
    sched = bundle.schedule
    T = sched.num_steps
    g = bundle.guidance
    dim = _infer_dim(bundle)
    x = _init_state(seed, batch, dim)
    counter = NfeCounter()
    trace = [] if record_trace else None
    for t in range(T, 0, -1):
        mode = bundle.modes.mode_at(t)
        eps_uncond = bundle.strong.predict(x, t, None)
        counter.base_uncond_evals += 1
        eps_weak = bundle.weak.predict(eps_uncond, x, label, t)
        counter.weak_evals += 1
        if mode == "slow":
            eps_cond = bundle.strong.predict(x, t, label)
            counter.base_cond_evals += 1
            if g.omega_cfg == 1.0:
                eps_strong = eps_cond.copy()
            elif g.omega_cfg == 0.0:
                eps_strong = eps_uncond.copy()
            else:
                eps_strong = eps_uncond + g.omega_cfg * (eps_cond - eps_uncond)
            eps = w2s_combine(eps_weak, eps_strong, g.omega_w2s)
        else:
            eps = eps_weak
        if record_trace:
            trace.append({"t": t, "mode": mode, "x_t": x.copy(), "eps": eps.copy()})
        x = ddim_step(x, eps, t, t - 1, sched)
    return x, counter, trace


def cfg_sample(strong, schedule: NoiseSchedule, omega: float, label: int,
               seed: int, batch: int = 1, dim: int | None = None,
               record_trace: bool = False):
    """Reference standard-CFG DDIM sampler (no weak model)."""
    T = schedule.num_steps
    if dim is None:
        dim = strong.dim if hasattr(strong, "dim") else strong.gmm.dim
    x = _init_state(seed, batch, dim)
    counter = NfeCounter()
    trace = [] if record_trace else None
    for t in range(T, 0, -1):
        eps, _, _ = cfg_eval(strong, x, t, label, omega)
        counter.base_cond_evals += 1
        counter.base_uncond_evals += 1
        if record_trace:
            trace.append({"t": t, "mode": "cfg", "x_t": x.copy(), "eps": eps.copy()})
        x = ddim_step(x, eps, t, t - 1, schedule)
    return x, counter, trace


def zcore2_sample(bundle: SamplerBundle, label: int, seed: int,
                  window=None, batch: int = 1):
    """Zigzag sampler: at windowed steps run slow DDIM down, fast-mode DDIM
    inversion back up (weak evaluated at the inversion's source step t-1),
    then a plain guided DDIM step.  Other steps are standard CFG.

    The default window is every step with t - 1 >= 1, since the weak model
    has no expert at step 0.
    """
    sched = bundle.schedule
    T = sched.num_steps
    g = bundle.guidance
    dim = _infer_dim(bundle)
    if window is None:
        window = range(2, T + 1)
    window = set(int(t) for t in window)
    if any(t < 2 or t > T for t in window):
        raise ValueError("zigzag window steps must lie in [2, T]")
    x = _init_state(seed, batch, dim)
    counter = NfeCounter()

    def guided_eps(state, t):
        eps_strong, _, _ = cfg_eval(bundle.strong, state, t, label, g.omega_cfg)
        counter.base_cond_evals += 1
        counter.base_uncond_evals += 1
        return eps_strong

    for t in range(T, 0, -1):
        if t in window:
            # slow-mode descent
            eps_uncond = bundle.strong.predict(x, t, None)
            counter.base_uncond_evals += 1
            eps_weak = bundle.weak.predict(eps_uncond, x, label, t)
            counter.weak_evals += 1
            eps_cond = bundle.strong.predict(x, t, label)
            counter.base_cond_evals += 1
            eps_strong = eps_uncond + g.omega_cfg * (eps_cond - eps_uncond)
            x_down = ddim_step(x, w2s_combine(eps_weak, eps_strong, g.omega_w2s),
                               t, t - 1, sched)
            # fast-mode inversion from t-1 back to t
            eps_uncond_s = bundle.strong.predict(x_down, t - 1, None)
            counter.base_uncond_evals += 1
            eps_fast = bundle.weak.predict(eps_uncond_s, x_down, label, t - 1)
            counter.weak_evals += 1
            x = ddim_invert(x_down, eps_fast, t - 1, t, sched)
        x = ddim_step(x, guided_eps(x, t), t, t - 1, sched)
    return x, counter


def _infer_dim(bundle: SamplerBundle) -> int:
    for obj in (bundle.strong, bundle.weak):
        if hasattr(obj, "dim"):
            return obj.dim
        if hasattr(obj, "gmm"):
            return obj.gmm.dim
        if hasattr(obj, "net"):
            return obj.net.sizes[-1]
        if hasattr(obj, "model"):
            return obj.model.dim
    raise ValueError("cannot infer data dimension from bundle sources")
