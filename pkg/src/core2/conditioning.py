"""Label conditioning embeddings.

Each class label maps to a fixed seeded random token matrix of shape
L_TOK x D_TOK, flattened for network input.  The matrix form exists so the
storage codec has a genuinely 2-D embedding to factor; the "compressed"
view round-trips the matrix through the truncated SVD codec at a given
rank, which is what the weak model consumes at train and sampling time.
The reserved null embedding (all zeros) marks the unconditional branch.
"""

from __future__ import annotations

import numpy as np

from .svdcodec import svd_compress, svd_restore

L_TOK = 8
D_TOK = 32
COND_DIM = L_TOK * D_TOK

EMBED_SEED = 4051


def label_embedding(label: int, seed: int = EMBED_SEED) -> np.ndarray:
    """Seeded random (L_TOK, D_TOK) token matrix for one label."""
    rng = np.random.default_rng([seed, int(label)])
    return rng.standard_normal((L_TOK, D_TOK))


def null_embedding() -> np.ndarray:
    return np.zeros((L_TOK, D_TOK))


class LabelEmbeddings:
    """Lookup for exact and SVD-compressed conditioning rows."""

    def __init__(self, labels, rank: int | None = None, seed: int = EMBED_SEED):
        self.seed = seed
        self.rank = rank
        self.labels = tuple(sorted(set(int(l) for l in labels)))
        self._exact = {l: label_embedding(l, seed) for l in self.labels}
        self._compressed = None
        if rank is not None:
            self._compressed = {
                l: svd_restore(svd_compress(m, rank)) for l, m in self._exact.items()
            }

    def exact(self, label: int) -> np.ndarray:
        return self._exact[int(label)]

    def flat(self, label: int | None) -> np.ndarray:
        if label is None:
            return np.zeros(COND_DIM)
        return self._exact[int(label)].reshape(COND_DIM)

    def compressed_flat(self, label: int | None) -> np.ndarray:
        if label is None:
            return np.zeros(COND_DIM)
        if self._compressed is None:
            raise ValueError("embeddings built without a compression rank")
        return self._compressed[int(label)].reshape(COND_DIM)
