"""Literal reference implementations used as independent test oracles.

Everything here trades speed for obviousness: plain Python loops, sets and
fractions, no shared code with the package under test beyond numpy inputs.
"""

from __future__ import annotations

import numpy as np


# ---------------------------------------------------------------- neighbors

def brute_knn(sims, k, exclude_self=True):
    """Per-row k nearest indices by descending similarity, ties ascending."""
    sims = np.asarray(sims, dtype=float)
    n = sims.shape[0]
    out = []
    for i in range(n):
        cand = [j for j in range(sims.shape[1]) if not (exclude_self and j == i)]
        cand.sort(key=lambda j: (-sims[i][j], j))
        out.append(cand[:k])
    return out


# ------------------------------------------------------- reciprocal pipeline

def literal_reciprocal_sets(nbrs, k):
    """R(i, k) for every item from full neighbor lists."""
    sets = []
    for i in range(len(nbrs)):
        mine = set(nbrs[i][:k])
        sets.append({j for j in mine if i in set(nbrs[j][:k])})
    return sets


def literal_expand(r_k, r_half):
    """R*(i) via the two-thirds overlap rule, compared in exact integers."""
    out = []
    for i in range(len(r_k)):
        grown = set(r_k[i])
        for g in r_k[i]:
            half = r_half[g]
            if 3 * len(r_k[i] & half) >= 2 * len(half):
                grown |= half
        out.append(grown)
    return out


def literal_set_jaccard(a, b):
    union = len(a | b)
    if union == 0:
        return 1.0
    return 1.0 - len(a & b) / union


def literal_krerank(pool_sims, nq, k1, lam):
    """Hard-set re-ranked distance matrix over a query+gallery pool.

    Returns (R sets, R* sets, jaccard matrix, final distance matrix).
    """
    n = pool_sims.shape[0]
    nbrs = brute_knn(pool_sims, n - 1)
    r_k = literal_reciprocal_sets(nbrs, k1)
    r_half = literal_reciprocal_sets(nbrs, k1 // 2)
    r_star = literal_expand(r_k, r_half)
    ng = n - nq
    d_j = np.empty((nq, ng))
    for i in range(nq):
        for j in range(ng):
            d_j[i, j] = literal_set_jaccard(r_star[i], r_star[nq + j])
    d_orig = 1.0 - pool_sims[:nq, nq:]
    return r_k, r_star, d_j, lam * d_orig + (1.0 - lam) * d_j


# ----------------------------------------------------------------- diffusion

def closed_form_diffusion(transition_dense, y, alpha):
    """Fixed point (1 - alpha) (I - alpha S)^{-1} y via a dense solve."""
    s = np.asarray(transition_dense, dtype=float)
    n = s.shape[0]
    return (1.0 - alpha) * np.linalg.solve(np.eye(n) - alpha * s, np.asarray(y, float))


# ------------------------------------------------------------------- metrics

def reference_ap(relevance, total_relevant):
    """Average precision by direct accumulation."""
    hits = 0
    total = 0.0
    for rank, rel in enumerate(relevance, start=1):
        if rel:
            hits += 1
            total += hits / rank
    return total / total_relevant


def reference_cmc_curve(relevance_rows, max_rank):
    """CMC value at every rank 1..max_rank."""
    curve = []
    for k in range(1, max_rank + 1):
        hit = [any(row[:k]) for row in relevance_rows]
        curve.append(sum(hit) / len(hit))
    return curve
