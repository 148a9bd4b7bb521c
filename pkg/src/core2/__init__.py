"""Collect / reflect / refine sampling laboratory on analytic Gaussian mixtures."""

__version__ = "0.1.0"

from .gmm import Gmm, LabeledSample, benchmark_mixture, eps_oracle, noised_mixture, score
from .schedule import NoiseSchedule, forward_noise, make_vp_schedule

__all__ = [
    "Gmm",
    "LabeledSample",
    "NoiseSchedule",
    "benchmark_mixture",
    "eps_oracle",
    "forward_noise",
    "make_vp_schedule",
    "noised_mixture",
    "score",
]
