"""Weighted isotropic Gaussian mixtures with closed-form noising and oracles.

The mixture doubles as the ground-truth data distribution and as an exact
score / epsilon oracle: noising a mixture N(mu_i, v_i I) along a schedule
gives another mixture N(alpha_t mu_i, (alpha_t^2 v_i + sigma_t^2) I), whose
score is a responsibility-weighted sum of per-component Gaussian scores, and
eps = -sigma_t * score.

Conditioning is by component label: "conditional" means the renormalized
sub-mixture carrying that label, "unconditional" means the full mixture.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule

WEIGHT_SUM_TOL = 1e-3
_NORMALIZED_TOL = 1e-12

# Repository constants for the built-in easy/hard-split benchmark: four
# "easy" components with energy in DFT bins 0-3 at weight 0.18 each, four
# "difficult" components with energy in bins 24-31 at weight 0.07 each.
BENCHMARK_DIM = 64
BENCHMARK_SEED = 202
EASY_BINS = range(0, 4)
DIFFICULT_BINS = range(24, 32)
EASY_WEIGHT = 0.18
DIFFICULT_WEIGHT = 0.07
BENCHMARK_MEAN_NORM = 6.0
BENCHMARK_VARIANCE = 0.25


@dataclass(frozen=True)
class Gmm:
    """Isotropic Gaussian mixture over R^d.

    weights (M,), means (M, d), variances (M,); labels is an optional
    per-component class tag.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", v)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("mixture needs at least one component")
        if mu.shape != (w.size, mu.shape[-1]) or mu.ndim != 2:
            raise ValueError("means must have shape (M, d)")
        if v.shape != (w.size,):
            raise ValueError("variances must have shape (M,)")
        if np.any(w <= 0.0):
            raise ValueError("every weight must be > 0")
        if abs(w.sum() - 1.0) > _NORMALIZED_TOL:
            raise ValueError("weights must sum to 1")
        if np.any(v <= 0.0):
            raise ValueError("every variance must be > 0")
        if self.labels is not None:
            labels = tuple(int(l) for l in self.labels)
            if len(labels) != w.size:
                raise ValueError("labels must match component count")
            if any(l < 0 for l in labels):
                raise ValueError("labels must be non-negative")
            object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def num_components(self) -> int:
        return self.weights.size

    def component_labels(self) -> tuple[int, ...]:
        """Per-component label, defaulting to the component index."""
        if self.labels is not None:
            return self.labels
        return tuple(range(self.num_components))


@dataclass(frozen=True)
class LabeledSample:
    x0: np.ndarray
    label: int


def validate_gmm(spec: dict) -> Gmm:
    """Build a Gmm from a raw {dim, components: [...]} description.

    Weights are renormalized when they sum to 1 within 1e-6 and rejected
    otherwise; dimension mismatches, non-positive weights and non-positive
    variances are rejected.
    """
    comps = spec.get("components")
    if not comps:
        raise ValueError("mixture spec needs a nonempty component list")
    dim = int(spec["dim"])
    weights = np.array([float(c["weight"]) for c in comps])
    if np.any(weights <= 0.0):
        raise ValueError("every component weight must be > 0")
    total = weights.sum()
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(f"weights sum to {total}, outside 1 +- {WEIGHT_SUM_TOL}")
    means = []
    for c in comps:
        mean = np.asarray(c["mean"], dtype=float)
        if mean.shape != (dim,):
            raise ValueError(f"mean of length {mean.size} inconsistent with dim {dim}")
        means.append(mean)
    variances = np.array([float(c["var"]) for c in comps])
    if np.any(variances <= 0.0):
        raise ValueError("every component variance must be > 0")
    labels = None
    if any("label" in c for c in comps):
        labels = tuple(int(c.get("label", i)) for i, c in enumerate(comps))
    return Gmm(weights / total, np.stack(means), variances, labels)


def mixture_to_spec(gmm: Gmm) -> dict:
    comps = []
    labels = gmm.labels
    for i in range(gmm.num_components):
        c = {
            "weight": float(gmm.weights[i]),
            "mean": [float(x) for x in gmm.means[i]],
            "var": float(gmm.variances[i]),
        }
        if labels is not None:
            c["label"] = labels[i]
        comps.append(c)
    return {"dim": gmm.dim, "components": comps}


def load_mixture(path) -> Gmm:
    with open(path, "r", encoding="utf-8") as f:
        return validate_gmm(json.load(f))


def save_mixture(gmm: Gmm, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(mixture_to_spec(gmm), f, indent=1)


def conditional(gmm: Gmm, label: int) -> Gmm:
    """Renormalized sub-mixture of the components carrying `label`."""
    labels = gmm.component_labels()
    idx = [i for i, l in enumerate(labels) if l == int(label)]
    if not idx:
        raise ValueError(f"no component carries label {label}")
    w = gmm.weights[idx]
    return Gmm(w / w.sum(), gmm.means[idx], gmm.variances[idx],
               tuple(labels[i] for i in idx))


def log_density(gmm: Gmm, x: np.ndarray) -> np.ndarray:
    """log p(x) for x of shape (..., d), stabilized with log-sum-exp."""
    x = np.asarray(x, dtype=float)
    d = gmm.dim
    diff = x[..., None, :] - gmm.means          # (..., M, d)
    sq = np.sum(diff * diff, axis=-1)           # (..., M)
    logs = (
        np.log(gmm.weights)
        - 0.5 * d * np.log(2.0 * np.pi * gmm.variances)
        - 0.5 * sq / gmm.variances
    )
    m = np.max(logs, axis=-1, keepdims=True)
    return (m + np.log(np.sum(np.exp(logs - m), axis=-1, keepdims=True)))[..., 0]


def responsibilities(gmm: Gmm, x: np.ndarray) -> np.ndarray:
    """Posterior component probabilities gamma_i(x), shape (..., M)."""
    x = np.asarray(x, dtype=float)
    d = gmm.dim
    diff = x[..., None, :] - gmm.means
    sq = np.sum(diff * diff, axis=-1)
    logs = (
        np.log(gmm.weights)
        - 0.5 * d * np.log(2.0 * np.pi * gmm.variances)
        - 0.5 * sq / gmm.variances
    )
    m = np.max(logs, axis=-1, keepdims=True)
    e = np.exp(logs - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def noised_mixture(gmm: Gmm, schedule: NoiseSchedule, t: int) -> Gmm:
    """Mixture of x_t = alpha_t x0 + sigma_t eps when x0 ~ gmm."""
    t = schedule.check_step(t)
    a = schedule.alphas[t]
    s = schedule.sigmas[t]
    return Gmm(gmm.weights, a * gmm.means, a * a * gmm.variances + s * s, gmm.labels)


def score(gmm_t: Gmm, x: np.ndarray) -> np.ndarray:
    """grad_x log p_t(x) for an already-noised mixture, shape (..., d)."""
    x = np.asarray(x, dtype=float)
    gamma = responsibilities(gmm_t, x)                      # (..., M)
    pull = (gmm_t.means - x[..., None, :]) / gmm_t.variances[:, None]
    return np.sum(gamma[..., None] * pull, axis=-2)


def eps_oracle(
    gmm: Gmm,
    schedule: NoiseSchedule,
    t: int,
    x: np.ndarray,
    label: int | None = None,
) -> np.ndarray:
    """Exact eps-prediction: eps = -sigma_t * score of the noised mixture.

    With a label, the oracle is conditional on the matching sub-mixture;
    without one it is the unconditional oracle over the full mixture.
    """
    t = schedule.check_step(t)
    base = gmm if label is None else conditional(gmm, label)
    return -schedule.sigmas[t] * score(noised_mixture(base, schedule, t), x)


def sample_x0(gmm: Gmm, count: int, rng_seed: int) -> list[LabeledSample]:
    """i.i.d. labeled draws; component by weight, then the Gaussian draw."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    labels = gmm.component_labels()
    comp = rng.choice(gmm.num_components, size=count, p=gmm.weights)
    noise = rng.standard_normal((count, gmm.dim))
    x = gmm.means[comp] + np.sqrt(gmm.variances[comp])[:, None] * noise
    return [LabeledSample(x[i], labels[comp[i]]) for i in range(count)]


def samples_to_arrays(samples: list[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    x0 = np.stack([s.x0 for s in samples])
    labels = np.array([s.label for s in samples], dtype=int)
    return x0, labels


def _band_limited_mean(rng: np.random.Generator, dim: int, bins, norm: float) -> np.ndarray:
    """Real signal with spectral energy only in the given one-sided bins."""
    j = np.arange(dim)
    x = np.zeros(dim)
    for k in bins:
        if k == 0 or 2 * k == dim:
            x = x + rng.normal() * np.cos(np.pi * 2 * k * j / dim)
        else:
            x = x + rng.normal() * np.cos(2 * np.pi * k * j / dim)
            x = x + rng.normal() * np.sin(2 * np.pi * k * j / dim)
    return norm * x / np.linalg.norm(x)


def benchmark_mixture(dim: int = BENCHMARK_DIM) -> Gmm:
    """The easy/hard-split benchmark: 8 components, spectrally separated.

    Components 0-3 carry smooth low-frequency means, components 4-7 carry
    high-frequency means; each component is its own conditioning label.
    """
    rng = np.random.default_rng(BENCHMARK_SEED)
    means = [_band_limited_mean(rng, dim, EASY_BINS, BENCHMARK_MEAN_NORM) for _ in range(4)]
    means += [_band_limited_mean(rng, dim, DIFFICULT_BINS, BENCHMARK_MEAN_NORM) for _ in range(4)]
    w = np.array([EASY_WEIGHT] * 4 + [DIFFICULT_WEIGHT] * 4)
    return Gmm(w / w.sum(), np.stack(means), np.full(8, BENCHMARK_VARIANCE),
               tuple(range(8)))
