"""reidrank: embedding expansion and re-ranking over precomputed descriptors.

Library plus batch CLI for retrieval experiments: ensemble fusion,
tracklet-ordered query expansion, database-side augmentation,
reciprocal-neighbor re-ranking, graph diffusion, retrieval metrics and a
seeded synthetic dataset generator.
"""

from ._version import VERSION as __version__
from .core import (
    CatalogMeta,
    EmbeddingMatrix,
    RankList,
    SimilarityMatrix,
    TrackletTable,
    cosine_similarity,
    knn_indices,
    l2_normalize_rows,
    mean_rows,
    rank_topk,
)
from .dba import DbaParams, dba_augment
from .diffusion import (
    AffinityGraph,
    DiffusionParams,
    build_affinity,
    diffuse,
    diffusion_rerank,
    diffusion_scores,
)
from .expansion import (
    DexParams,
    EnsembleInput,
    alpha_qe_expand,
    aqe_expand,
    dex_expand,
    fuse_ensemble,
    tracklet_gallery,
    tracklet_rerank,
    tracklet_rerank_scores,
)
from .kreciprocal import (
    KRParams,
    expand_reciprocal,
    jaccard_distance,
    krerank,
    krerank_distances,
    reciprocal_set,
)
from .metrics import EvalReport, average_precision, cmc_at, evaluate
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    StageSpec,
    default_stage_chain,
    rerun_from_manifest,
    run_pipeline,
    validate_stage_order,
)
from .synth import SynthDataset, SynthSpec, generate
from . import errors

__all__ = [
    "__version__",
    "AffinityGraph",
    "CatalogMeta",
    "DbaParams",
    "DexParams",
    "DiffusionParams",
    "EmbeddingMatrix",
    "EnsembleInput",
    "EvalReport",
    "KRParams",
    "PipelineConfig",
    "PipelineResult",
    "RankList",
    "SimilarityMatrix",
    "StageSpec",
    "SynthDataset",
    "SynthSpec",
    "TrackletTable",
    "alpha_qe_expand",
    "aqe_expand",
    "average_precision",
    "build_affinity",
    "cmc_at",
    "cosine_similarity",
    "dba_augment",
    "default_stage_chain",
    "dex_expand",
    "diffuse",
    "diffusion_rerank",
    "diffusion_scores",
    "errors",
    "evaluate",
    "expand_reciprocal",
    "fuse_ensemble",
    "generate",
    "jaccard_distance",
    "knn_indices",
    "krerank",
    "krerank_distances",
    "l2_normalize_rows",
    "mean_rows",
    "rank_topk",
    "reciprocal_set",
    "rerun_from_manifest",
    "run_pipeline",
    "tracklet_gallery",
    "tracklet_rerank",
    "tracklet_rerank_scores",
    "validate_stage_order",
]
