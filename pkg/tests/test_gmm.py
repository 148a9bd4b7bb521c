import numpy as np
import pytest

from core2.gmm import (
    Gmm,
    benchmark_mixture,
    conditional,
    eps_oracle,
    log_density,
    mixture_to_spec,
    noised_mixture,
    responsibilities,
    sample_x0,
    samples_to_arrays,
    score,
    validate_gmm,
)
from core2.schedule import NoiseSchedule, make_vp_schedule
from helpers import random_mixture


def spec_of(components, dim):
    return {"dim": dim, "components": components}


class TestValidateGmm:
    def test_single_component_identity(self):
        g = validate_gmm(spec_of([{"weight": 1.0, "mean": [0.0, 0.0], "var": 1.0}], 2))
        assert g.num_components == 1
        assert g.dim == 2

    def test_near_one_weights_renormalized(self):
        g = validate_gmm(spec_of(
            [{"weight": 0.5, "mean": [0.0], "var": 1.0},
             {"weight": 0.5001, "mean": [1.0], "var": 1.0}], 1))
        assert abs(g.weights.sum() - 1.0) < 1e-12

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError, match="weight"):
            validate_gmm(spec_of(
                [{"weight": -0.1, "mean": [0.0], "var": 1.0},
                 {"weight": 1.1, "mean": [1.0], "var": 1.0}], 1))

    def test_bad_sum_rejected(self):
        with pytest.raises(ValueError, match="sum"):
            validate_gmm(spec_of([{"weight": 0.8, "mean": [0.0], "var": 1.0}], 1))

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError, match="variance"):
            validate_gmm(spec_of([{"weight": 1.0, "mean": [0.0], "var": -1.0}], 1))

    def test_inconsistent_mean_dim_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            validate_gmm(spec_of([{"weight": 1.0, "mean": [0.0, 1.0], "var": 1.0}], 1))

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            validate_gmm(spec_of([], 1))

    def test_spec_round_trip(self):
        g = benchmark_mixture()
        g2 = validate_gmm(mixture_to_spec(g))
        assert np.array_equal(g.means, g2.means)
        assert g.labels == g2.labels


class TestNoisedMixture:
    def test_t0_unchanged(self):
        g = random_mixture(np.random.default_rng(1), 4, 3)
        sched = make_vp_schedule(9)
        g0 = noised_mixture(g, sched, 0)
        assert np.array_equal(g0.means, g.means)
        assert np.array_equal(g0.variances, g.variances)

    def test_direct_substitution(self):
        g = Gmm(np.array([1.0]), np.array([[2.0]]), np.array([1.0]))
        sched = NoiseSchedule(1, np.array([1.0, 0.8]), np.array([0.0, 0.6]),
                              mode="variance_preserving")
        gt = noised_mixture(g, sched, 1)
        assert np.isclose(gt.means[0, 0], 1.6)
        assert np.isclose(gt.variances[0], 1.0)

    def test_two_path_sampling_agreement(self):
        # x0 ~ gmm then forward-noise vs direct draw from the noised mixture
        from core2.evaluation import sliced_wasserstein
        from core2.schedule import forward_noise

        g = random_mixture(np.random.default_rng(7), 6, 4)
        sched = make_vp_schedule(12)
        t = 7
        n = 10_000
        x0, _ = samples_to_arrays(sample_x0(g, n, 11))
        noise = np.random.default_rng(12).standard_normal((n, 6))
        path_a = forward_noise(x0, t, sched, noise)
        path_b, _ = samples_to_arrays(sample_x0(noised_mixture(g, sched, t), n, 13))
        assert sliced_wasserstein(path_a, path_b, projections=64, seed=5) < 0.05


class TestScore:
    def test_standard_normal_score(self):
        g = Gmm(np.array([1.0]), np.zeros((1, 3)), np.array([1.0]))
        assert np.allclose(score(g, np.ones(3)), -np.ones(3), atol=1e-14)

    def test_symmetric_components_cancel(self):
        mu = np.array([1.5, -0.5])
        g = Gmm(np.array([0.5, 0.5]), np.stack([mu, -mu]), np.array([0.7, 0.7]))
        assert np.allclose(score(g, np.zeros(2)), 0.0, atol=1e-14)

    def test_matches_finite_difference_log_density(self):
        rng = np.random.default_rng(3)
        g = random_mixture(rng, 5, 3)
        x = rng.normal(size=5)
        h = 1e-5
        fd = np.zeros(5)
        for i in range(5):
            xp = x.copy(); xp[i] += h
            xm = x.copy(); xm[i] -= h
            fd[i] = (log_density(g, xp) - log_density(g, xm)) / (2 * h)
        assert np.max(np.abs(score(g, x) - fd)) < 1e-5

    def test_batched_shape(self):
        g = random_mixture(np.random.default_rng(4), 3, 2)
        out = score(g, np.zeros((7, 3)))
        assert out.shape == (7, 3)


class TestEpsOracle:
    def test_sigma_zero_gives_zero(self):
        g = random_mixture(np.random.default_rng(5), 4, 2)
        sched = make_vp_schedule(6)
        assert np.allclose(eps_oracle(g, sched, 0, np.ones(4)), 0.0, atol=0)

    def test_single_gaussian_closed_form(self):
        mu = np.array([1.0, -2.0, 0.5])
        var = 0.8
        g = Gmm(np.array([0.3, 0.7]), np.stack([mu, -mu]),
                np.array([var, var]), labels=(1, 2))
        sched = make_vp_schedule(9)
        t, x = 5, np.array([0.4, 0.1, -1.0])
        a, s = sched.alphas[t], sched.sigmas[t]
        expected = s * (x - a * mu) / (a * a * var + s * s)
        assert np.allclose(eps_oracle(g, sched, t, x, label=1), expected, atol=1e-12)

    def test_eps_score_duality_exact(self):
        g = random_mixture(np.random.default_rng(6), 4, 3)
        sched = make_vp_schedule(8)
        x = np.random.default_rng(7).normal(size=4)
        for t in (1, 4, 8):
            dual = -sched.sigmas[t] * score(noised_mixture(g, sched, t), x)
            assert np.array_equal(eps_oracle(g, sched, t, x), dual)

    def test_mixture_decomposition(self):
        # unconditional oracle = responsibility-weighted conditional oracles
        rng = np.random.default_rng(8)
        g = random_mixture(rng, 4, 5, labeled=True)
        sched = make_vp_schedule(10)
        t = 6
        x = rng.normal(size=4)
        gt = noised_mixture(g, sched, t)
        gamma = responsibilities(gt, x)
        mix = np.zeros(4)
        for label in set(g.labels):
            idx = [i for i, l in enumerate(g.labels) if l == label]
            mix += gamma[idx].sum() * eps_oracle(g, sched, t, x, label=label)
        assert np.max(np.abs(mix - eps_oracle(g, sched, t, x))) < 1e-10

    def test_unknown_label(self):
        g = random_mixture(np.random.default_rng(9), 3, 2, labeled=True)
        sched = make_vp_schedule(4)
        with pytest.raises(ValueError, match="label"):
            eps_oracle(g, sched, 2, np.zeros(3), label=99)


class TestSampleX0:
    def test_degenerate_variance_concentrates(self):
        g = Gmm(np.array([1.0]), np.full((1, 4), 5.0), np.array([1e-12]))
        x0, _ = samples_to_arrays(sample_x0(g, 200, 1))
        assert np.max(np.abs(x0 - 5.0)) < 1e-4

    def test_component_frequencies_multinomial(self):
        g = random_mixture(np.random.default_rng(10), 2, 4, labeled=True)
        n = 100_000
        _, labels = samples_to_arrays(sample_x0(g, n, 2))
        for i, w in enumerate(g.weights):
            freq = np.mean(labels == i)
            bound = 3.0 * np.sqrt(w * (1 - w) / n)
            assert abs(freq - w) <= bound

    def test_seed_determinism(self):
        g = random_mixture(np.random.default_rng(11), 3, 3)
        a, la = samples_to_arrays(sample_x0(g, 50, 42))
        b, lb = samples_to_arrays(sample_x0(g, 50, 42))
        assert np.array_equal(a, b)
        assert np.array_equal(la, lb)


class TestBenchmarkMixture:
    def test_structure(self):
        g = benchmark_mixture()
        assert g.num_components == 8
        assert g.dim == 64
        assert np.allclose(g.weights[:4], 0.18, atol=1e-12)
        assert np.allclose(g.weights[4:], 0.07, atol=1e-12)
        assert g.labels == tuple(range(8))

    def test_spectral_separation(self):
        g = benchmark_mixture()
        for i in range(8):
            spec = np.abs(np.fft.rfft(g.means[i])) ** 2
            total = spec.sum()
            low = spec[:4].sum()
            high = spec[24:32].sum()
            if i < 4:
                assert low / total > 0.999999
            else:
                assert high / total > 0.999999

    def test_conditional_selects_single_component(self):
        g = benchmark_mixture()
        sub = conditional(g, 5)
        assert sub.num_components == 1
        assert np.array_equal(sub.means[0], g.means[5])
