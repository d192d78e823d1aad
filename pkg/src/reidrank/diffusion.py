"""Graph-diffusion re-ranking.

The gallery becomes a locally constrained affinity graph with monomial
kernel weights max(cos, 0)^gamma on neighbor edges, symmetrically
normalized as

    S = D^{-1/2} A D^{-1/2},   D = diag(A 1)

Query similarity enters through a seed vector y (kernel-weighted mass on
the query's k_q nearest nodes) and is spread over the manifold by iterating

    f_t = alpha * S @ f_{t-1} + (1 - alpha) * y

from f_0 = y until the residual drops below tolerance or the iteration cap
is reached. Queries are not inserted as graph nodes, so one gallery graph
serves every query.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import EmbeddingMatrix, RankList, cosine_similarity, knn_indices
from .errors import (
    ClampedParameterWarning,
    DisconnectedNodeWarning,
    NotConvergedWarning,
    ValidationError,
)

EDGE_MODES = ("union", "mutual")


@dataclass(frozen=True)
class DiffusionParams:
    k: int = 50
    k_q: int = 25
    alpha: float = 0.95
    t_max: int = 25
    gamma: float = 3.0
    tol: float = 1e-6
    edge_mode: str = "union"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie strictly between 0 and 1")
        if self.k < 1 or self.k_q < 1:
            raise ValidationError("k and k_q must be at least 1")
        if self.gamma < 1.0:
            raise ValidationError("gamma must be at least 1")
        if self.t_max < 1:
            raise ValidationError("t_max must be at least 1")
        if self.tol <= 0.0:
            raise ValidationError("tol must be positive")
        if self.edge_mode not in EDGE_MODES:
            raise ValidationError(f"edge_mode must be one of {EDGE_MODES}")


@dataclass(frozen=True)
class AffinityGraph:
    """Sparse affinity matrix A, its normalization S, and node degrees."""

    affinity: sp.csr_matrix
    transition: sp.csr_matrix
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.affinity.shape[0]


def build_affinity(g: EmbeddingMatrix, p: DiffusionParams = DiffusionParams()) -> AffinityGraph:
    """Locally constrained, symmetrically normalized affinity graph.

    An edge (i, j) is kept when j is in i's top-k or (``mutual`` mode: and)
    i is in j's top-k; weights are max(cos, 0)^gamma, symmetrized by max,
    zero diagonal. Zero-degree nodes get a zero row in S and are reported
    with a ``DisconnectedNodeWarning``.
    """
    if not g.normalized:
        raise ValidationError("build_affinity requires a normalized gallery")
    n = g.n
    k = p.k
    if k > n - 1:
        warnings.warn(
            f"build_affinity: k={k} clamped to {n - 1}", ClampedParameterWarning, stacklevel=2
        )
        k = n - 1
    sims = g.data @ g.data.T
    nbrs = knn_indices(sims, k)
    chosen = np.zeros((n, n), dtype=bool)
    chosen[np.repeat(np.arange(n), k), nbrs.ravel()] = True
    keep = (chosen | chosen.T) if p.edge_mode == "union" else (chosen & chosen.T)
    weights = np.where(keep, np.clip(sims, 0.0, None) ** p.gamma, 0.0)
    weights = np.maximum(weights, weights.T)
    np.fill_diagonal(weights, 0.0)
    affinity = sp.csr_matrix(weights)
    affinity.eliminate_zeros()
    degrees = np.asarray(affinity.sum(axis=1)).ravel()
    isolated = degrees <= 0.0
    if isolated.any():
        warnings.warn(
            f"affinity graph has {int(isolated.sum())} zero-degree node(s)",
            DisconnectedNodeWarning,
            stacklevel=2,
        )
    inv_sqrt = np.zeros(n, dtype=np.float64)
    np.divide(1.0, np.sqrt(degrees, where=~isolated), out=inv_sqrt, where=~isolated)
    scale = sp.diags(inv_sqrt)
    transition = (scale @ affinity @ scale).tocsr()
    return AffinityGraph(affinity, transition, degrees)


def _iterate(transition: sp.csr_matrix, seeds: np.ndarray, p: DiffusionParams) -> np.ndarray:
    """Run the propagation on one seed vector or a column-stacked batch."""
    f = seeds.copy()
    residual = np.inf
    for _ in range(p.t_max):
        f_next = p.alpha * (transition @ f) + (1.0 - p.alpha) * seeds
        residual = float(np.max(np.abs(f_next - f))) if f.size else 0.0
        f = f_next
        if residual < p.tol:
            return f
    warnings.warn(
        f"diffusion stopped at t_max={p.t_max} with residual {residual:.3e} >= tol {p.tol:.1e}",
        NotConvergedWarning,
        stacklevel=3,
    )
    return f


def diffuse(graph: AffinityGraph, y: np.ndarray, p: DiffusionParams = DiffusionParams()) -> np.ndarray:
    """Propagate a seed vector to its (approximate) diffusion fixed point.

    ``y`` must be non-negative and sum to 1. The result is returned even
    when the iteration cap is hit; that case is reported as a
    ``NotConvergedWarning``.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape != (graph.n,):
        raise ValidationError(f"seed vector must have length {graph.n}")
    if (y < 0).any():
        raise ValidationError("seed vector must be non-negative")
    if abs(y.sum() - 1.0) > 1e-6:
        raise ValidationError("seed vector must be l1-normalized")
    return _iterate(graph.transition, y, p)


def diffusion_scores(
    q: EmbeddingMatrix, g: EmbeddingMatrix, p: DiffusionParams = DiffusionParams()
) -> np.ndarray:
    """nq x ng matrix of diffused ranking scores, one row per query.

    Each query seeds kernel-weighted mass on its k_q nearest gallery nodes
    (uniform mass if every kernel weight vanishes) and all queries are
    propagated as one batch.
    """
    graph = build_affinity(g, p)
    sims = cosine_similarity(q, g)
    kq = p.k_q
    if kq > g.n:
        warnings.warn(
            f"diffusion: k_q={kq} clamped to {g.n}", ClampedParameterWarning, stacklevel=2
        )
        kq = g.n
    order = np.argsort(-sims, axis=1, kind="stable")[:, :kq]
    w = np.clip(np.take_along_axis(sims, order, axis=1), 0.0, None) ** p.gamma
    mass = w.sum(axis=1)
    flat = mass <= 0.0
    if flat.any():
        w[flat] = 1.0
        mass[flat] = kq
    seeds = np.zeros((g.n, q.n), dtype=np.float64)
    for i in range(q.n):
        seeds[order[i], i] = w[i] / mass[i]
    return _iterate(graph.transition, seeds, p).T


def diffusion_rerank(
    q: EmbeddingMatrix, g: EmbeddingMatrix, p: DiffusionParams = DiffusionParams()
) -> RankList:
    """Rank the gallery per query by descending diffused score."""
    f = diffusion_scores(q, g, p)
    order = np.argsort(-f, axis=1, kind="stable")
    return RankList(order, np.take_along_axis(f, order, axis=1))
