import numpy as np
import pytest

from core2.svdcodec import SvdFactors, svd_compress, svd_restore


def oracle_singular_values(a):
    """Independent route: eigendecomposition of A^T A."""
    evals = np.linalg.eigvalsh(a.T @ a)
    return np.sqrt(np.clip(evals, 0.0, None))[::-1]


class TestCompressRestore:
    def test_full_rank_exact(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(8, 32))
        f = svd_compress(a, 8)
        assert np.linalg.norm(a - svd_restore(f)) < 1e-10

    def test_rank_one_outer_product(self):
        rng = np.random.default_rng(1)
        a = np.outer(rng.normal(size=8), rng.normal(size=32))
        f = svd_compress(a, 1)
        assert np.linalg.norm(a - svd_restore(f)) < 1e-10

    def test_zero_matrix(self):
        f = svd_compress(np.zeros((5, 7)), 3)
        assert np.array_equal(svd_restore(f), np.zeros((5, 7)))
        assert np.array_equal(f.s, np.zeros(3))

    @pytest.mark.parametrize("seed", range(12))
    def test_eckart_young_equality(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(8, 32))
        r = 4
        f = svd_compress(a, r)
        err = np.sum((a - svd_restore(f)) ** 2)
        s = oracle_singular_values(a)
        assert abs(err - np.sum(s[r:] ** 2)) < 1e-8

    def test_compress_restore_idempotent(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(8, 32))
        f1 = svd_compress(a, 4)
        f2 = svd_compress(svd_restore(f1), 4)
        assert np.max(np.abs(f1.s - f2.s)) < 1e-10

    def test_rank_out_of_range(self):
        a = np.zeros((4, 6))
        with pytest.raises(ValueError, match="rank"):
            svd_compress(a, 0)
        with pytest.raises(ValueError, match="rank"):
            svd_compress(a, 5)

    def test_non_finite_rejected(self):
        a = np.zeros((3, 3))
        a[0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            svd_compress(a, 1)

    def test_singular_values_match_oracle(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(6, 10))
        f = svd_compress(a, 6)
        assert np.max(np.abs(f.s - oracle_singular_values(a)[:6])) < 1e-9

    def test_determinism(self):
        rng = np.random.default_rng(10)
        a = rng.normal(size=(8, 32))
        f1 = svd_compress(a, 4)
        f2 = svd_compress(a.copy(), 4)
        assert np.array_equal(f1.u, f2.u)
        assert np.array_equal(f1.v, f2.v)


class TestFactorValidation:
    def test_corrupted_u_rejected(self):
        rng = np.random.default_rng(2)
        f = svd_compress(rng.normal(size=(8, 32)), 4)
        bad_u = f.u.copy()
        bad_u[:, 0] *= 2.0
        with pytest.raises(ValueError, match="orthonormal"):
            SvdFactors(bad_u, f.s, f.v, f.rank)

    def test_unsorted_singular_values_rejected(self):
        rng = np.random.default_rng(3)
        f = svd_compress(rng.normal(size=(8, 8)), 4)
        with pytest.raises(ValueError, match="descending"):
            SvdFactors(f.u, f.s[::-1].copy(), f.v, f.rank)

    def test_storage_saving(self):
        # r(L + D + 1) floats beat the dense L*D embedding at the defaults
        L, D, r = 8, 32, 4
        assert r * (L + D + 1) == 164 < L * D
