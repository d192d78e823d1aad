"""Reciprocal-neighbor re-ranking.

The neighbor pool is the union of queries and gallery. For every pool item
the reciprocal set R(i, k) collects the items that are in i's k-NN while i
is in theirs; R*(i, k) additionally absorbs the half-size reciprocal set of
any member whose overlap with R(i, k) reaches two thirds of its own size,
which recovers positives pushed out of the top-k without flooding the set
with negatives. Items are then encoded as (optionally softly weighted)
membership vectors over the pool, the Jaccard distance between query and
gallery encodings is computed, and the final distance blends it with the
original cosine distance:

    d_final = lambda * (1 - cos) + (1 - lambda) * d_jaccard
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import EmbeddingMatrix, RankList, cosine_similarity, knn_indices
from .errors import ClampedParameterWarning, ValidationError


@dataclass(frozen=True)
class KRParams:
    """Neighborhood sizes, blend weight and encoding mode.

    ``sigma_weighting`` switches the set encodings from hard 0/1 indicators
    to exp(similarity) weights; ``local_expansion`` averages each encoding
    over the item and its k2 nearest others. Both default on; disabling both
    yields the plain set pipeline used by the reference checks.
    """

    k1: int = 60
    k2: int = 30
    lam: float = 0.5
    sigma_weighting: bool = True
    local_expansion: bool = True

    def __post_init__(self):
        if not self.k1 >= self.k2 >= 1:
            raise ValidationError("need k1 >= k2 >= 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError("lambda must lie in [0, 1]")


def reciprocal_set(neighbors: Sequence[Sequence[int]], i: int, k: int) -> set[int]:
    """Mutual-neighbor set of item ``i`` from per-item neighbor lists.

    Lists are truncated to their first ``k`` entries; an item j qualifies
    when j is among i's k nearest and i is among j's k nearest.
    """
    mine = [int(j) for j in list(neighbors[i])[:k]]
    return {j for j in mine if i in set(int(x) for x in list(neighbors[j])[:k])}


def expand_reciprocal(
    r_k: Sequence[set[int]], r_half: Sequence[set[int]]
) -> list[set[int]]:
    """Grow each reciprocal set by the qualifying half-size sets of its members.

    Member g's half-size set is absorbed when |R(i) ∩ R_half(g)| is at least
    two thirds of |R_half(g)|; the comparison is done in integers so the
    boundary case is exact.
    """
    out: list[set[int]] = []
    for base in r_k:
        grown = set(base)
        for g in base:
            half = r_half[g]
            if 3 * len(base & half) >= 2 * len(half):
                grown |= half
        out.append(grown)
    return out


def jaccard_distance(a, b) -> float:
    """Jaccard distance between two index sets or weighted vectors.

    Hard sets use 1 - |a∩b| / |a∪b|; weighted vectors use 1 - sum(min) /
    sum(max). Two empty inputs are at distance 1 by convention.
    """
    if isinstance(a, (set, frozenset)) or isinstance(b, (set, frozenset)):
        a, b = set(a), set(b)
        union = len(a | b)
        return 1.0 if union == 0 else 1.0 - len(a & b) / union
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError("weighted encodings must share their universe")
    total_max = float(np.maximum(a, b).sum())
    if total_max <= 0.0:
        return 1.0
    return 1.0 - float(np.minimum(a, b).sum()) / total_max


def mutual_neighbor_matrix(nbrs: np.ndarray, k: int) -> sp.csr_matrix:
    """Boolean CSR matrix whose row i is R(i, k) over the pool."""
    n = nbrs.shape[0]
    if k == 0:
        return sp.csr_matrix((n, n), dtype=bool)
    cols = nbrs[:, :k].ravel()
    rows = np.repeat(np.arange(n), k)
    member = sp.csr_matrix(
        (np.ones(rows.size, dtype=bool), (rows, cols)), shape=(n, n)
    )
    return member.multiply(member.T).tocsr()


def expanded_reciprocal_matrix(r_k: sp.csr_matrix, r_half: sp.csr_matrix) -> sp.csr_matrix:
    """Sparse version of ``expand_reciprocal`` over all pool items at once."""
    rk = r_k.astype(np.int64)
    rh = r_half.astype(np.int64)
    half_sizes = np.asarray(rh.sum(axis=1)).ravel()
    # counts[i, g] = |R(i) ∩ R_half(g)|; only pairs with g in R(i) matter
    counts = (rk @ rh.T).multiply(r_k).tocoo()
    keep = 3 * counts.data >= 2 * half_sizes[counts.col]
    cond = sp.coo_matrix(
        (np.ones(int(keep.sum()), dtype=np.int64), (counts.row[keep], counts.col[keep])),
        shape=r_k.shape,
    ).tocsr()
    # zero-overlap members always fail unless their half set is empty, and
    # absorbing an empty set is a no-op, so dropping them above is safe
    return ((r_k + (cond @ rh)) > 0).tocsr()


def _encodings(
    rstar: sp.csr_matrix,
    sims: np.ndarray,
    nbrs: np.ndarray,
    p: KRParams,
) -> np.ndarray:
    """Dense per-item membership encodings over the pool."""
    if p.sigma_weighting:
        v = np.where(rstar.toarray(), np.exp(sims), 0.0)
        row_sums = v.sum(axis=1, keepdims=True)
        np.divide(v, row_sums, out=v, where=row_sums > 0)
    else:
        v = rstar.toarray().astype(np.float64)
    if p.local_expansion:
        n = v.shape[0]
        k2 = min(p.k2, n - 1)
        hood = np.hstack([np.arange(n)[:, None], nbrs[:, :k2]])
        rows = np.repeat(np.arange(n), k2 + 1)
        avg = sp.csr_matrix(
            (np.full(rows.size, 1.0 / (k2 + 1)), (rows, hood.ravel())), shape=(n, n)
        )
        v = avg @ v
    return v


def jaccard_distances(vq: np.ndarray, vg: np.ndarray) -> np.ndarray:
    """Pairwise weighted Jaccard distances between query and gallery encodings."""
    nq, ng = vq.shape[0], vg.shape[0]
    sum_q = vq.sum(axis=1)
    sum_g = vg.sum(axis=1)
    out = np.ones((nq, ng), dtype=np.float64)
    for i in range(nq):
        support = np.flatnonzero(vq[i])
        if support.size == 0:
            continue
        mins = np.minimum(vg[:, support], vq[i, support][None, :]).sum(axis=1)
        maxs = sum_q[i] + sum_g - mins
        np.divide(mins, maxs, out=mins, where=maxs > 0)
        out[i] = 1.0 - mins
    return out


def krerank_distances(
    q: EmbeddingMatrix, g: EmbeddingMatrix, p: KRParams = KRParams()
) -> np.ndarray:
    """Final blended nq x ng distance matrix of the reciprocal re-ranking."""
    pool = np.vstack([q.data, g.data])
    n = pool.shape[0]
    k1 = p.k1
    if k1 > n - 1:
        warnings.warn(
            f"krerank: k1={k1} clamped to pool size minus one ({n - 1})",
            ClampedParameterWarning,
            stacklevel=2,
        )
        k1 = n - 1
    sims = pool @ pool.T
    nbrs = knn_indices(sims, k1)
    r_k = mutual_neighbor_matrix(nbrs, k1)
    r_half = mutual_neighbor_matrix(nbrs, k1 // 2)
    rstar = expanded_reciprocal_matrix(r_k, r_half)
    v = _encodings(rstar, sims, nbrs, p)
    d_jaccard = jaccard_distances(v[: q.n], v[q.n :])
    # fresh query-gallery product so the lambda=1 ranks match the baseline
    d_orig = 1.0 - cosine_similarity(q, g)
    return p.lam * d_orig + (1.0 - p.lam) * d_jaccard


def krerank(q: EmbeddingMatrix, g: EmbeddingMatrix, p: KRParams = KRParams()) -> RankList:
    """Rank the gallery per query by ascending blended distance."""
    d = krerank_distances(q, g, p)
    order = np.argsort(d, axis=1, kind="stable")
    return RankList(order, -np.take_along_axis(d, order, axis=1))
