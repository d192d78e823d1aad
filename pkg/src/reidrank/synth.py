"""Seeded synthetic dataset generator for desk-scale verification.

Identity centroids are drawn on the unit sphere; each tracklet center is a
Gaussian perturbation of its identity centroid, each image a Gaussian
perturbation of its tracklet center, and each ensemble member an
independent perturbation of the image, all renormalized. Every identity
holds one tracklet out as queries, so query tracklets never appear in the
gallery. Generation is single-threaded on a PCG64 stream, making output
byte-identical for identical specs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CatalogMeta, EmbeddingMatrix, TrackletTable
from .errors import InvalidSpecError
from .expansion import EnsembleInput


@dataclass(frozen=True)
class SynthSpec:
    n_ids: int = 100
    tracklets_per_id: int = 3
    images_per_tracklet: tuple[int, int] = (4, 8)
    d: int = 128
    sigma_id: float = 0.07
    sigma_track: float = 0.05
    n_models: int = 1
    scale_jitter: float = 0.08
    queries_per_id: int = 2
    seed: int = 0

    def __post_init__(self):
        counts = {
            "n_ids": self.n_ids,
            "tracklets_per_id": self.tracklets_per_id,
            "d": self.d,
            "n_models": self.n_models,
            "queries_per_id": self.queries_per_id,
        }
        for name, value in counts.items():
            if int(value) < 1:
                raise InvalidSpecError(f"{name} must be at least 1")
        lo, hi = self.images_per_tracklet
        if not 1 <= int(lo) <= int(hi):
            raise InvalidSpecError("images_per_tracklet must be a range 1 <= lo <= hi")
        object.__setattr__(self, "images_per_tracklet", (int(lo), int(hi)))
        for name in ("sigma_id", "sigma_track", "scale_jitter"):
            if float(getattr(self, name)) < 0:
                raise InvalidSpecError(f"{name} must be non-negative")


@dataclass(frozen=True)
class SynthDataset:
    query: EnsembleInput
    gallery: EnsembleInput
    query_meta: CatalogMeta
    gallery_meta: CatalogMeta
    tracklets: TrackletTable


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


class _Side:
    """Accumulates one split (query or gallery) during generation."""

    def __init__(self, prefix: str, n_models: int):
        self.prefix = prefix
        self.rows = [[] for _ in range(n_models)]
        self.image_ids: list[str] = []
        self.tracklet_ids: list[str] = []
        self.identity_ids: list[str] = []
        self.camera_ids: list[str] = []

    def add(self, member_rows: list[np.ndarray], tid: str, identity: str, camera: str):
        count = member_rows[0].shape[0]
        start = len(self.image_ids)
        for m, rows in enumerate(member_rows):
            self.rows[m].append(rows)
        for j in range(count):
            self.image_ids.append(f"{self.prefix}{start + j:05d}")
        self.tracklet_ids += [tid] * count
        self.identity_ids += [identity] * count
        self.camera_ids += [camera] * count

    def build(self) -> tuple[EnsembleInput, CatalogMeta]:
        members = tuple(
            EmbeddingMatrix(np.vstack(rows), tuple(self.image_ids), normalized=True)
            for rows in self.rows
        )
        meta = CatalogMeta(
            tuple(self.image_ids),
            tuple(self.tracklet_ids),
            tuple(self.identity_ids),
            tuple(self.camera_ids),
        )
        return EnsembleInput(members), meta


def generate(spec: SynthSpec) -> SynthDataset:
    """Generate a labelled query/gallery split from a spec, deterministically."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    centroids = _unit(rng.standard_normal((spec.n_ids, spec.d)))
    lo, hi = spec.images_per_tracklet
    queries = _Side("q", spec.n_models)
    gallery = _Side("g", spec.n_models)

    for ident in range(spec.n_ids):
        identity = f"id{ident:04d}"
        # tracklet 0 is held out as the query tracklet for this identity
        for tr in range(spec.tracklets_per_id + 1):
            center = _unit(centroids[ident] + spec.sigma_id * rng.standard_normal(spec.d))
            count = spec.queries_per_id if tr == 0 else int(rng.integers(lo, hi + 1))
            base = _unit(center + spec.sigma_track * rng.standard_normal((count, spec.d)))
            member_rows = [
                _unit(base + spec.scale_jitter * rng.standard_normal(base.shape))
                for _ in range(spec.n_models)
            ]
            side = queries if tr == 0 else gallery
            side.add(member_rows, f"{identity}_t{tr}", identity, f"cam{tr}")

    q_ens, q_meta = queries.build()
    g_ens, g_meta = gallery.build()
    return SynthDataset(q_ens, g_ens, q_meta, g_meta, TrackletTable.from_meta(g_meta))
