"""Domain types and the vector/matrix primitives every stage builds on.

Similarity (cosine), not distance, is the internal convention; stages that
need a distance derive it as ``1 - cos``. All ranking ties are broken by
ascending gallery index so that results are reproducible across runs and
platforms. Matrices are held in float64 regardless of storage precision so
that long dot-product and mean accumulations do not drift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptySubsetError,
    ValidationError,
    ZeroRowError,
)

#: slack allowed on the unit-norm invariant of a matrix flagged `normalized`
NORM_TOL = 1e-6
#: rows with an L2 norm below this are treated as zero and rejected
ZERO_NORM = 1e-12

#: nq x ng array of cosine similarities (plain ndarray; see cosine_similarity)
SimilarityMatrix = np.ndarray


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, order="C", copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EmbeddingMatrix:
    """An n x d matrix of image descriptors, one row per image.

    ``row_ids`` name the rows (unique, positional). When ``normalized`` is
    set, every row is guaranteed to have unit L2 norm within ``NORM_TOL``;
    all-zero rows are rejected outright.
    """

    data: np.ndarray
    row_ids: tuple[str, ...]
    normalized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValidationError(f"embedding data must be 2-D, got shape {data.shape}")
        if data.shape[1] < 1:
            raise ValidationError("descriptor dimension must be at least 1")
        if not np.isfinite(data).all():
            raise ValidationError("embedding entries must be finite")
        ids = tuple(str(r) for r in self.row_ids)
        if len(ids) != data.shape[0]:
            raise ValidationError(
                f"{len(ids)} row ids for {data.shape[0]} rows"
            )
        if len(set(ids)) != len(ids):
            raise ValidationError("row ids must be unique")
        if self.normalized and data.shape[0]:
            norms = np.linalg.norm(data, axis=1)
            off = np.abs(norms - 1.0) > NORM_TOL
            if off.any():
                bad = int(np.flatnonzero(off)[0])
                raise ValidationError(
                    f"matrix flagged normalized but row {bad} has norm {norms[bad]!r}"
                )
        object.__setattr__(self, "data", _frozen_array(data, np.float64))
        object.__setattr__(self, "row_ids", ids)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CatalogMeta:
    """Per-image metadata binding embedding rows to the world.

    Rows are positional: record ``i`` describes embedding row ``i``.
    Identity labels are only needed for evaluation and may be absent.
    """

    image_ids: tuple[str, ...]
    tracklet_ids: tuple[str, ...]
    identity_ids: tuple[str, ...] | None = None
    camera_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        image_ids = tuple(str(v) for v in self.image_ids)
        tracklet_ids = tuple(str(v) for v in self.tracklet_ids)
        if len(set(image_ids)) != len(image_ids):
            raise ValidationError("image ids must be unique")
        if len(tracklet_ids) != len(image_ids):
            raise ValidationError("one tracklet id required per image")
        object.__setattr__(self, "image_ids", image_ids)
        object.__setattr__(self, "tracklet_ids", tracklet_ids)
        for name in ("identity_ids", "camera_ids"):
            col = getattr(self, name)
            if col is None:
                continue
            col = tuple(str(v) for v in col)
            if len(col) != len(image_ids):
                raise ValidationError(f"{name} length does not match image ids")
            object.__setattr__(self, name, col)

    def __len__(self) -> int:
        return len(self.image_ids)

    @property
    def has_identities(self) -> bool:
        return self.identity_ids is not None


@dataclass(frozen=True)
class TrackletTable:
    """Partition of gallery rows into tracklets.

    ``groups`` maps tracklet id to the sorted row indices of its members.
    The groups must be disjoint and cover ``0..n_rows-1`` exactly.
    """

    groups: dict[str, tuple[int, ...]]
    n_rows: int

    def __post_init__(self):
        clean: dict[str, tuple[int, ...]] = {}
        seen: set[int] = set()
        for tid, members in self.groups.items():
            members = tuple(int(m) for m in members)
            if not members:
                raise ValidationError(f"tracklet {tid!r} has no members")
            if list(members) != sorted(set(members)):
                raise ValidationError(f"tracklet {tid!r} members must be sorted and unique")
            if seen.intersection(members):
                raise ValidationError(f"tracklet {tid!r} overlaps another tracklet")
            seen.update(members)
            clean[str(tid)] = members
        if seen != set(range(self.n_rows)):
            raise ValidationError("tracklets must partition the gallery rows exactly")
        object.__setattr__(self, "groups", clean)

    @classmethod
    def from_meta(cls, meta: CatalogMeta) -> "TrackletTable":
        groups: dict[str, list[int]] = {}
        for row, tid in enumerate(meta.tracklet_ids):
            groups.setdefault(tid, []).append(row)
        return cls({tid: tuple(rows) for tid, rows in groups.items()}, len(meta))

    @property
    def ordered_ids(self) -> tuple[str, ...]:
        """Tracklet ids ordered by their first member row index."""
        return tuple(sorted(self.groups, key=lambda tid: self.groups[tid][0]))

    def member_lists(self) -> tuple[tuple[int, ...], ...]:
        """Member index tuples, aligned with ``ordered_ids``."""
        return tuple(self.groups[tid] for tid in self.ordered_ids)


@dataclass(frozen=True)
class RankList:
    """Per-query gallery indices in best-first order plus inducing scores.

    ``indices[i]`` is a duplicate-free list of gallery indices for query
    ``i`` and ``scores[i]`` is non-increasing. Composite re-rankings whose
    order is not induced by a single scalar score carry ordinal scores.
    """

    indices: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if indices.ndim != 2 or scores.shape != indices.shape:
            raise ValidationError("indices and scores must be equal-shape 2-D arrays")
        if indices.size:
            if (indices < 0).any():
                raise ValidationError("gallery indices must be non-negative")
            if indices.shape[1] > 1:
                ordered = np.sort(indices, axis=1)
                if (np.diff(ordered, axis=1) == 0).any():
                    raise ValidationError("gallery indices must be unique per query")
                if (np.diff(scores, axis=1) > 0).any():
                    raise ValidationError("scores must be non-increasing per query")
        object.__setattr__(self, "indices", _frozen_array(indices, np.int64))
        object.__setattr__(self, "scores", _frozen_array(scores, np.float64))

    @property
    def n_queries(self) -> int:
        return self.indices.shape[0]

    @property
    def depth(self) -> int:
        return self.indices.shape[1]


def ordinal_scores(n_queries: int, depth: int) -> np.ndarray:
    """Strictly decreasing placeholder scores for composite orderings."""
    return np.tile(np.arange(depth, 0, -1, dtype=np.float64), (n_queries, 1))


def l2_normalize_rows(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit L2 norm, preserving order and ids.

    A matrix already flagged ``normalized`` is returned unchanged; its rows
    are unit by invariant and renormalizing would only churn low bits.
    Raises ``ZeroRowError`` for rows with norm below ``ZERO_NORM``.
    """
    if m.normalized:
        return m
    norms = np.linalg.norm(m.data, axis=1)
    bad = np.flatnonzero(norms < ZERO_NORM)
    if bad.size:
        row = int(bad[0])
        raise ZeroRowError(row, float(norms[row]))
    return EmbeddingMatrix(m.data / norms[:, None], m.row_ids, normalized=True)


def cosine_similarity(q: EmbeddingMatrix, g: EmbeddingMatrix) -> SimilarityMatrix:
    """Dense nq x ng cosine similarity between two normalized matrices."""
    if q.d != g.d:
        raise DimensionMismatchError(f"query d={q.d} but gallery d={g.d}")
    if not (q.normalized and g.normalized):
        raise ValidationError("cosine_similarity requires L2-normalized inputs")
    return q.data @ g.data.T


def rank_topk(s: SimilarityMatrix, k: int | None = None) -> RankList:
    """Indices of the k largest similarities per query, descending.

    ``k=None`` ranks the full gallery. ``k`` beyond the gallery size clamps
    silently. Ties are broken by ascending gallery index.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2:
        raise ValidationError("similarity matrix must be 2-D")
    ng = s.shape[1]
    if k is None:
        k = ng
    elif k < 0:
        raise ValidationError("k must be non-negative")
    k = min(k, ng)
    order = np.argsort(-s, axis=1, kind="stable")[:, :k]
    return RankList(order, np.take_along_axis(s, order, axis=1))


def knn_indices(square_sims: SimilarityMatrix, k: int) -> np.ndarray:
    """k nearest *other* items per row of a square similarity matrix.

    Self is excluded; ties are broken by ascending index. Used for every
    neighborhood construction (augmentation, reciprocal sets, graphs).
    """
    s = np.asarray(square_sims, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValidationError("knn_indices requires a square similarity matrix")
    if not 0 <= k <= s.shape[0] - 1:
        raise ValidationError(f"k={k} out of range for {s.shape[0]} items")
    work = s.copy()
    np.fill_diagonal(work, -np.inf)
    return np.argsort(-work, axis=1, kind="stable")[:, :k]


def mean_rows(m: EmbeddingMatrix, subset: Iterable[int] | Sequence[int]) -> np.ndarray:
    """Arithmetic mean of the selected rows (not normalized)."""
    idx = np.asarray(sorted(set(int(i) for i in subset)), dtype=np.intp)
    if idx.size == 0:
        raise EmptySubsetError("mean_rows requires a non-empty subset")
    if idx[0] < 0 or idx[-1] >= m.n:
        raise ValidationError("subset index out of range")
    return m.data[idx].mean(axis=0)
