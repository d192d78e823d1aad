"""Database-side feature augmentation.

Each gallery descriptor is replaced by an aggregate of itself (optionally)
and its k nearest gallery neighbors, then renormalized. Unlike tracklet
averaging this uses plain cosine k-NN, so every row is expanded with the
same amount of data regardless of tracklet sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmbeddingMatrix, knn_indices, l2_normalize_rows
from .errors import GalleryTooSmallError, ValidationError, ZeroRowError

WEIGHTINGS = ("uniform", "similarity")


@dataclass(frozen=True)
class DbaParams:
    k: int = 10
    include_self: bool = True
    weighting: str = "uniform"

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        if self.weighting not in WEIGHTINGS:
            raise ValidationError(f"weighting must be one of {WEIGHTINGS}")


def dba_augment(g: EmbeddingMatrix, p: DbaParams = DbaParams()) -> EmbeddingMatrix:
    """Replace every gallery row by the (weighted) mean of its neighborhood.

    The k nearest rows exclude the row itself; ``include_self`` adds it back
    with weight 1. ``similarity`` weighting uses the neighbor cosine clamped
    at zero. Row order, ids and unit norms are preserved.
    """
    if not g.normalized:
        raise ValidationError("dba_augment requires a normalized gallery")
    if g.n < p.k + 1:
        raise GalleryTooSmallError(
            f"gallery of {g.n} rows cannot supply k={p.k} neighbors per row"
        )
    sims = g.data @ g.data.T
    nbrs = knn_indices(sims, p.k)
    if p.weighting == "similarity":
        w = np.clip(np.take_along_axis(sims, nbrs, axis=1), 0.0, None)
    else:
        w = np.ones((g.n, p.k), dtype=np.float64)
    agg = np.einsum("qk,qkd->qd", w, g.data[nbrs])
    total = w.sum(axis=1)
    if p.include_self:
        agg = agg + g.data
        total = total + 1.0
    dead = np.flatnonzero(total <= 0.0)
    if dead.size:
        raise ZeroRowError(int(dead[0]))
    mean = agg / total[:, None]
    return l2_normalize_rows(EmbeddingMatrix(mean, g.row_ids))
