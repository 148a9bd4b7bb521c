"""Shared numerical test utilities (independent oracles live here)."""

import numpy as np


def central_diff_grad(f, arrays, h=1e-4):
    """Central finite-difference gradient of scalar f wrt a list of arrays.

    Perturbs each coordinate in place and restores it, so `arrays` must be
    the same objects f reads.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rtol=1e-4, atol=1e-9):
    """Per-coordinate |a - n| <= atol + rtol * max(|a|, |n|)."""
    for a, n in zip(analytic, numeric):
        bound = atol + rtol * np.maximum(np.abs(a), np.abs(n))
        worst = np.max(np.abs(a - n) - bound)
        assert worst <= 0.0, f"gradient mismatch by {worst:.3e} beyond tolerance"


def random_mixture(rng, dim, num_components, labeled=False):
    from core2.gmm import Gmm

    w = rng.dirichlet(np.ones(num_components) * 2.0)
    means = rng.normal(0.0, 2.0, size=(num_components, dim))
    variances = rng.uniform(0.3, 2.0, size=num_components)
    labels = tuple(range(num_components)) if labeled else None
    return Gmm(w, means, variances, labels)
