"""Retrieval evaluation: average precision, mAP, mAP@K and CMC@k.

Conventions: a gallery item is relevant when it shares the query identity.
Truncated metrics (mAP@K) keep the full relevant count in the denominator,
so mAP@K <= mAP for any K. Queries without any relevant gallery item are
excluded from the averages and reported, not scored as zero. Removing
same-camera matches of the query identity is available behind a flag and
off by default.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CatalogMeta, RankList
from .errors import EmptyEvalError, SkippedQueryWarning, ValidationError

#: the CMC curve in a report is computed densely up to this rank
CMC_CURVE_DEPTH = 50


@dataclass(frozen=True)
class EvalReport:
    map_full: float
    map_at_k: dict[int, float]
    cmc: dict[int, float]
    per_query_ap: tuple[float, ...]
    scored_query_indices: tuple[int, ...]
    n_scored: int
    n_skipped: int

    def key_values(self) -> list[tuple[str, str]]:
        """Flat (metric, value) rows for delimited output and text display."""
        rows = [("map", f"{self.map_full:.6f}")]
        rows += [(f"map@{k}", f"{v:.6f}") for k, v in sorted(self.map_at_k.items())]
        rows += [(f"cmc@{k}", f"{v:.6f}") for k, v in sorted(self.cmc.items())]
        rows.append(("queries_scored", str(self.n_scored)))
        rows.append(("queries_skipped", str(self.n_skipped)))
        return rows


def average_precision(ranked_relevance: Sequence[bool], total_relevant: int) -> float:
    """AP of one ranked relevance list against a known relevant count.

    Sum of precision-at-hit over the listed hits divided by
    ``total_relevant``; relevant items beyond the list simply lose their
    contribution, which gives truncated lists mAP@K semantics.
    """
    if total_relevant < 1:
        raise ValidationError("total_relevant must be at least 1")
    rel = np.asarray(ranked_relevance, dtype=bool).ravel()
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        return 0.0
    precision_at_hits = np.arange(1, hits.size + 1, dtype=np.float64) / (hits + 1)
    return float(precision_at_hits.sum() / total_relevant)


def cmc_at(ranked_relevance_rows: Sequence[Sequence[bool]], k: int) -> float:
    """Fraction of queries whose first relevant item is within the top k."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    rows = [np.asarray(r, dtype=bool).ravel() for r in ranked_relevance_rows]
    if not rows:
        raise EmptyEvalError("cmc_at needs at least one query")
    return float(np.mean([row[:k].any() for row in rows]))


def _relevance_rows(
    ranks: RankList,
    query_meta: CatalogMeta,
    gallery_meta: CatalogMeta,
    filter_same_camera: bool,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-query ranked relevance rows plus full-gallery relevant counts.

    With camera filtering, same-identity same-camera gallery items are
    treated as junk: dropped from the ranked rows and from the counts.
    """
    q_ids = np.asarray(query_meta.identity_ids)
    g_ids = np.asarray(gallery_meta.identity_ids)
    use_cam = (
        filter_same_camera
        and query_meta.camera_ids is not None
        and gallery_meta.camera_ids is not None
    )
    if use_cam:
        q_cams = np.asarray(query_meta.camera_ids)
        g_cams = np.asarray(gallery_meta.camera_ids)
    rows: list[np.ndarray] = []
    totals = np.empty(ranks.n_queries, dtype=np.int64)
    for i in range(ranks.n_queries):
        relevant = g_ids == q_ids[i]
        if use_cam:
            junk = relevant & (g_cams == q_cams[i])
            relevant = relevant & ~junk
            listed = ranks.indices[i]
            listed = listed[~junk[listed]]
        else:
            listed = ranks.indices[i]
        rows.append(relevant[listed])
        totals[i] = int(relevant.sum())
    return rows, totals


def evaluate(
    ranks: RankList,
    query_meta: CatalogMeta,
    gallery_meta: CatalogMeta,
    cmc_ks: Sequence[int] = (1, 5, 10, 20),
    map_ks: Sequence[int] = (100,),
    filter_same_camera: bool = False,
    truncated_map_denominator: bool = False,
) -> EvalReport:
    """Aggregate AP/mAP/mAP@K/CMC over a rank list with identity truth.

    ``ranks`` rows index the gallery; metadata is positional. ``map_full``
    is computed over the provided list depth, so feeding top-100 lists
    yields the mAP@100 convention by construction.
    ``truncated_map_denominator`` switches mAP@K to divide by
    min(total_relevant, K) instead of the full relevant count.
    """
    if ranks.n_queries == 0:
        raise EmptyEvalError("no queries to evaluate")
    if ranks.n_queries != len(query_meta):
        raise ValidationError("rank list and query metadata disagree on query count")
    if not (query_meta.has_identities and gallery_meta.has_identities):
        raise ValidationError("evaluation requires identity labels on both sides")
    if ranks.indices.size and int(ranks.indices.max()) >= len(gallery_meta):
        raise ValidationError("rank list indexes beyond the gallery metadata")

    rows, totals = _relevance_rows(ranks, query_meta, gallery_meta, filter_same_camera)
    scored = [i for i in range(len(rows)) if totals[i] >= 1]
    n_skipped = len(rows) - len(scored)
    if n_skipped:
        warnings.warn(
            f"excluded {n_skipped} quer{'y' if n_skipped == 1 else 'ies'} with no relevant gallery items",
            SkippedQueryWarning,
            stacklevel=2,
        )
    if not scored:
        raise EmptyEvalError("every query lacks relevant gallery items")

    aps = tuple(average_precision(rows[i], int(totals[i])) for i in scored)
    map_full = float(np.mean(aps))

    def _at_k_total(i: int, k: int) -> int:
        if truncated_map_denominator:
            return min(int(totals[i]), int(k))
        return int(totals[i])

    map_at_k = {
        int(k): float(
            np.mean([average_precision(rows[i][:k], _at_k_total(i, k)) for i in scored])
        )
        for k in map_ks
    }
    scored_rows = [rows[i] for i in scored]
    depth = ranks.depth
    curve_ks = set(range(1, min(CMC_CURVE_DEPTH, depth) + 1))
    curve_ks.update(int(k) for k in cmc_ks)
    cmc = {k: cmc_at(scored_rows, min(k, depth)) for k in sorted(curve_ks) if depth}
    return EvalReport(
        map_full=map_full,
        map_at_k=map_at_k,
        cmc=cmc,
        per_query_ap=aps,
        scored_query_indices=tuple(scored),
        n_scored=len(scored),
        n_skipped=n_skipped,
    )
