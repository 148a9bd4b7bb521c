"""Truncated SVD storage codec for conditioning embeddings.

svd_compress keeps the top-r factors of an L x D matrix, storing
r(L + D + 1) floats instead of L*D; svd_restore rebuilds the best rank-r
approximation.  The decomposition itself is a one-sided Jacobi iteration,
run to convergence so the Eckart-Young identity holds to test precision
(the independent cross-check is an eigendecomposition of A^T A).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-8
_JACOBI_TOL = 1e-12
_MAX_SWEEPS = 100


@dataclass(frozen=True)
class SvdFactors:
    """Top-rank factors u (L x r), s (r,), v (D x r) with A ~ u diag(s) v^T."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    rank: int

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        s = np.asarray(self.s, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "v", v)
        r = int(self.rank)
        if u.ndim != 2 or v.ndim != 2 or u.shape[1] != r or v.shape[1] != r or s.shape != (r,):
            raise ValueError("factor shapes inconsistent with rank")
        if np.any(s < 0.0):
            raise ValueError("singular values must be non-negative")
        if np.any(np.diff(s) > 0.0):
            raise ValueError("singular values must be sorted descending")
        for name, m in (("u", u), ("v", v)):
            gram = m.T @ m
            if np.max(np.abs(gram - np.eye(r))) > ORTHONORMAL_TOL:
                raise ValueError(f"columns of {name} are not orthonormal")


def svd_restore(f: SvdFactors) -> np.ndarray:
    return (f.u * f.s) @ f.v.T


def svd_compress(a: np.ndarray, rank: int) -> SvdFactors:
    """Best rank-r factorization of a (Eckart-Young optimal)."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    r = int(rank)
    if not 1 <= r <= min(a.shape):
        raise ValueError(f"rank {r} outside [1, {min(a.shape)}]")
    u, s, v = _jacobi_svd(a)
    return SvdFactors(u[:, :r], s[:r], v[:, :r], r)


def _jacobi_svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-sided Jacobi SVD: rotate column pairs of B = A V until the
    off-diagonal Frobenius norm of B^T B falls below 1e-12 relative."""
    n_rows, n_cols = a.shape
    b = a.copy()
    v = np.eye(n_cols)
    ref = float(np.sum(a * a))
    k = min(n_rows, n_cols)
    if ref == 0.0:
        u = _orthonormal_fill(np.zeros((n_rows, 0)), k)
        return u, np.zeros(k), _orthonormal_fill(np.zeros((n_cols, 0)), k)

    for _ in range(_MAX_SWEEPS):
        for p in range(n_cols - 1):
            for q in range(p + 1, n_cols):
                apq = float(b[:, p] @ b[:, q])
                if apq == 0.0:
                    continue
                app = float(b[:, p] @ b[:, p])
                aqq = float(b[:, q] @ b[:, q])
                if abs(apq) < 1e-16 * np.sqrt(app * aqq):
                    continue
                tau = (aqq - app) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                bp = b[:, p].copy()
                b[:, p] = c * bp - s * b[:, q]
                b[:, q] = s * bp + c * b[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        gram = b.T @ b
        np.fill_diagonal(gram, 0.0)
        if np.linalg.norm(gram) <= _JACOBI_TOL * ref:
            break
    else:
        raise RuntimeError("Jacobi SVD failed to converge")

    norms = np.linalg.norm(b, axis=0)
    order = np.argsort(-norms, kind="stable")[:k]
    s_vals = norms[order]
    tiny = 1e-13 * np.sqrt(ref)
    u_cols = []
    v_cols = []
    for idx, sv in zip(order, s_vals):
        if sv > tiny:
            u_cols.append(b[:, idx] / sv)
            v_cols.append(v[:, idx])
    u = np.stack(u_cols, axis=1) if u_cols else np.zeros((n_rows, 0))
    vv = np.stack(v_cols, axis=1) if v_cols else np.zeros((n_cols, 0))
    s_vals = np.where(s_vals > tiny, s_vals, 0.0)
    u = _orthonormal_fill(u, k)
    vv = _orthonormal_fill(vv, k)
    # Deterministic sign convention: largest-|.| entry of each u column > 0.
    for j in range(k):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] = -u[:, j]
            vv[:, j] = -vv[:, j]
    return u, s_vals, vv


def _orthonormal_fill(m: np.ndarray, k: int) -> np.ndarray:
    """Extend the orthonormal columns of m to k columns via Gram-Schmidt
    against the canonical basis (deterministic)."""
    n = m.shape[0]
    cols = [m[:, j] for j in range(m.shape[1])]
    e = 0
    while len(cols) < k:
        if e >= n:
            raise ValueError("cannot complete orthonormal basis")
        cand = np.zeros(n)
        cand[e] = 1.0
        e += 1
        for c in cols:
            cand = cand - (c @ cand) * c
        norm = np.linalg.norm(cand)
        if norm > 1e-10:
            cols.append(cand / norm)
    return np.stack(cols, axis=1) if cols else np.zeros((n, 0))
