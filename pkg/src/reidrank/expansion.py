"""Embedding expansion stages: ensemble fusion, tracklet-ordered re-ranking
and neighbor-weighted query expansion.

Fusion averages per-model/per-scale descriptor views of the same images and
renormalizes, so the expanded descriptor keeps the size (and thus the online
similarity cost) of a single view. Query expansion renews each query as

    q_hat = q + sum over top-k neighbors g of g * max(cos(q, g), 0)^alpha

where the neighbor order comes either from the plain cosine ranking (alpha
query expansion) or from the tracklet-ordered ranking (tracklet-mean ranking
with members placed back in tracklet rank order).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    EmbeddingMatrix,
    RankList,
    TrackletTable,
    cosine_similarity,
    l2_normalize_rows,
    ordinal_scores,
    rank_topk,
)
from .errors import (
    ClampedParameterWarning,
    InconsistentEnsembleError,
    ValidationError,
)


@dataclass(frozen=True)
class EnsembleInput:
    """Descriptor views of the same image set, one matrix per (model, scale)."""

    members: tuple[EmbeddingMatrix, ...]

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise InconsistentEnsembleError("ensemble needs at least one member")
        first = members[0]
        for i, m in enumerate(members[1:], start=1):
            if m.d != first.d:
                raise InconsistentEnsembleError(
                    f"member {i} has d={m.d}, expected {first.d}"
                )
            if m.row_ids != first.row_ids:
                raise InconsistentEnsembleError(f"member {i} row ids differ from member 0")
        object.__setattr__(self, "members", members)

    @property
    def n(self) -> int:
        return self.members[0].n

    @property
    def d(self) -> int:
        return self.members[0].d

    @property
    def row_ids(self) -> tuple[str, ...]:
        return self.members[0].row_ids

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class DexParams:
    """Neighbor count and similarity exponent for tracklet query expansion."""

    k: int = 20
    alpha: float = 2.0
    renormalize: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        if self.alpha < 0:
            raise ValidationError("alpha must be non-negative")


def _clamp_k(k: int, limit: int, what: str) -> int:
    if k > limit:
        warnings.warn(
            f"{what}: k={k} clamped to {limit}", ClampedParameterWarning, stacklevel=3
        )
        return limit
    return k


def fuse_ensemble(ensemble: EnsembleInput | Sequence[EmbeddingMatrix]) -> EmbeddingMatrix:
    """Average ensemble members elementwise and L2-normalize per row.

    Output dimension equals the member dimension for any ensemble size.
    A single-member ensemble comes back as that member (normalized).
    """
    e = ensemble if isinstance(ensemble, EnsembleInput) else EnsembleInput(tuple(ensemble))
    if len(e) == 1:
        return l2_normalize_rows(e.members[0])
    mean = np.mean(np.stack([m.data for m in e.members]), axis=0)
    return l2_normalize_rows(EmbeddingMatrix(mean, e.row_ids))


def tracklet_gallery(
    g: EmbeddingMatrix, t: TrackletTable
) -> tuple[EmbeddingMatrix, tuple[tuple[int, ...], ...]]:
    """Aggregate the gallery to one normalized mean row per tracklet.

    Tracklet rows are ordered by first member index; the returned member map
    is aligned with that order. Singleton tracklets pass their (already
    normalized) member row through untouched.
    """
    if t.n_rows != g.n:
        raise ValidationError(f"tracklet table covers {t.n_rows} rows, gallery has {g.n}")
    members = t.member_lists()
    rows = np.empty((len(members), g.d), dtype=np.float64)
    needs_norm = np.zeros(len(members), dtype=bool)
    for i, mem in enumerate(members):
        if len(mem) == 1 and g.normalized:
            rows[i] = g.data[mem[0]]
        else:
            rows[i] = g.data[list(mem)].mean(axis=0)
            needs_norm[i] = True
    if needs_norm.any():
        out = l2_normalize_rows(EmbeddingMatrix(rows, t.ordered_ids))
    else:
        out = EmbeddingMatrix(rows, t.ordered_ids, normalized=True)
    return out, members


def _expand_tracklet_ranks(
    tracklet_scores: np.ndarray,
    member_scores: np.ndarray,
    members: tuple[tuple[int, ...], ...],
) -> RankList:
    """Order tracklets by score, then place members back at the tracklet
    ranks, ordered within each tracklet by their own score."""
    nq, ng = member_scores.shape
    t_order = np.argsort(-tracklet_scores, axis=1, kind="stable")
    member_arrays = [np.asarray(m, dtype=np.int64) for m in members]
    indices = np.empty((nq, ng), dtype=np.int64)
    for qi in range(nq):
        pos = 0
        for ti in t_order[qi]:
            mem = member_arrays[ti]
            local = np.argsort(-member_scores[qi, mem], kind="stable")
            indices[qi, pos : pos + mem.size] = mem[local]
            pos += mem.size
    return RankList(indices, ordinal_scores(nq, ng))


def tracklet_rerank(q: EmbeddingMatrix, g: EmbeddingMatrix, t: TrackletTable) -> RankList:
    """Rank tracklets by query-to-tracklet-mean cosine, expanded in place.

    The output is a full gallery permutation per query. Members within a
    tracklet are ordered by direct query-member cosine, descending.
    """
    tg, members = tracklet_gallery(g, t)
    return _expand_tracklet_ranks(
        cosine_similarity(q, tg), cosine_similarity(q, g), members
    )


def tracklet_rerank_scores(scores: np.ndarray, t: TrackletTable) -> RankList:
    """Tracklet-ordered re-ranking of an arbitrary per-query score matrix.

    Used to pull tracklets together after a distance-based re-ranker: the
    tracklet key is the mean of its members' scores.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != t.n_rows:
        raise ValidationError("score matrix does not match the tracklet table")
    members = t.member_lists()
    t_scores = np.stack([scores[:, list(m)].mean(axis=1) for m in members], axis=1)
    return _expand_tracklet_ranks(t_scores, scores, members)


def _weighted_expand(
    q: EmbeddingMatrix,
    g: EmbeddingMatrix,
    neighbor_idx: np.ndarray,
    alpha: float,
    renormalize: bool,
) -> EmbeddingMatrix:
    sims = cosine_similarity(q, g)
    # negative cosines contribute nothing; alpha=0 degenerates to weight 1
    w = np.clip(np.take_along_axis(sims, neighbor_idx, axis=1), 0.0, None) ** alpha
    expanded = q.data + np.einsum("qk,qkd->qd", w, g.data[neighbor_idx])
    out = EmbeddingMatrix(expanded, q.row_ids)
    return l2_normalize_rows(out) if renormalize else out


def dex_expand(
    q: EmbeddingMatrix,
    g: EmbeddingMatrix,
    t: TrackletTable,
    p: DexParams = DexParams(),
) -> EmbeddingMatrix:
    """Renew each query from the top-k of its tracklet-ordered gallery."""
    k = _clamp_k(p.k, g.n, "dex_expand")
    order = tracklet_rerank(q, g, t).indices[:, :k]
    return _weighted_expand(q, g, order, p.alpha, p.renormalize)


def alpha_qe_expand(
    q: EmbeddingMatrix,
    g: EmbeddingMatrix,
    k: int = 20,
    alpha: float = 2.0,
    renormalize: bool = True,
) -> EmbeddingMatrix:
    """Similarity-weighted query expansion over the plain cosine ranking."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    k = _clamp_k(k, g.n, "alpha_qe_expand")
    top = rank_topk(cosine_similarity(q, g), k).indices
    return _weighted_expand(q, g, top, alpha, renormalize)


def aqe_expand(q: EmbeddingMatrix, g: EmbeddingMatrix, k: int = 20) -> EmbeddingMatrix:
    """Average query expansion: mean of the query and its top-k neighbors."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    k = _clamp_k(k, g.n, "aqe_expand")
    top = rank_topk(cosine_similarity(q, g), k).indices
    mean = (q.data + g.data[top].sum(axis=1)) / (k + 1)
    return l2_normalize_rows(EmbeddingMatrix(mean, q.row_ids))
