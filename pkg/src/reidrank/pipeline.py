"""Pipeline composition: declarative stage chains over embedding files.

A run loads query/gallery ensembles and metadata, applies embedding
transforms (fuse, query expansion, database augmentation) in order, lets at
most one distance-based re-ranker produce the final score matrix, and can
finish with a tracklet pass that pulls tracklet members together using the
re-ranked scores. Every run emits a top-k submission and a manifest with
the resolved configuration and content hashes, sufficient to reproduce the
run byte-for-byte.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema

from ._version import VERSION
from .core import (
    CatalogMeta,
    EmbeddingMatrix,
    RankList,
    TrackletTable,
    cosine_similarity,
    l2_normalize_rows,
    rank_topk,
)
from .dba import DbaParams, dba_augment
from .diffusion import DiffusionParams, diffusion_scores
from .errors import StageOrderError, ValidationError
from .expansion import (
    DexParams,
    EnsembleInput,
    alpha_qe_expand,
    aqe_expand,
    dex_expand,
    fuse_ensemble,
    tracklet_rerank,
    tracklet_rerank_scores,
)
from .io import (
    _atomic_write_text,
    emit_submission,
    load_embeddings,
    load_metadata,
    sha256_file,
    sidecar_path,
)
from .kreciprocal import KRParams, krerank_distances
from .metrics import EvalReport, evaluate

STAGE_NAMES = (
    "fuse",
    "dex",
    "aqe",
    "alpha_qe",
    "dba",
    "tracklet_rerank",
    "kreciprocal",
    "diffusion",
)
RANKER_STAGES = frozenset({"kreciprocal", "diffusion"})
#: stages that need gallery tracklet structure
TRACKLET_STAGES = frozenset({"dex", "tracklet_rerank"})

SUBMISSION_FILE = "submission.txt"
MANIFEST_FILE = "manifest.json"
METRICS_FILE = "metrics.csv"
PER_QUERY_AP_FILE = "per_query_ap.csv"


def _resolve_params(name: str, raw: dict | None) -> dict:
    """Materialize stage defaults and reject unknown keys."""
    raw = dict(raw or {})
    try:
        if name in ("fuse", "tracklet_rerank"):
            if raw:
                raise ValidationError(f"stage {name!r} takes no parameters, got {sorted(raw)}")
            return {}
        if name == "dex":
            return dataclasses.asdict(DexParams(**raw))
        if name == "aqe":
            k = int(raw.pop("k", 20))
            if raw:
                raise ValidationError(f"unknown aqe parameters {sorted(raw)}")
            if k < 1:
                raise ValidationError("k must be at least 1")
            return {"k": k}
        if name == "alpha_qe":
            params = {
                "k": int(raw.pop("k", 20)),
                "alpha": float(raw.pop("alpha", 2.0)),
                "renormalize": bool(raw.pop("renormalize", True)),
            }
            if raw:
                raise ValidationError(f"unknown alpha_qe parameters {sorted(raw)}")
            DexParams(k=params["k"], alpha=params["alpha"])  # same constraints
            return params
        if name == "dba":
            return dataclasses.asdict(DbaParams(**raw))
        if name == "kreciprocal":
            if "lambda" in raw:
                raw["lam"] = raw.pop("lambda")
            return dataclasses.asdict(KRParams(**raw))
        if name == "diffusion":
            return dataclasses.asdict(DiffusionParams(**raw))
    except TypeError as exc:
        raise ValidationError(f"bad parameters for stage {name!r}: {exc}") from exc
    raise StageOrderError(f"unknown stage {name!r}; valid stages: {STAGE_NAMES}")


@dataclass(frozen=True)
class StageSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", _resolve_params(self.name, self.params))


def validate_stage_order(names: Sequence[str]) -> None:
    """Enforce the stage grammar: fuse? transform* ranker? tracklet_rerank?

    Expansion stages come before distance-based re-rankers; at most one of
    kreciprocal/diffusion runs, terminally, optionally followed by a
    tracklet pass over its scores.
    """
    for n in names:
        if n not in STAGE_NAMES:
            raise StageOrderError(f"unknown stage {n!r}; valid stages: {STAGE_NAMES}")
    rest = list(names)
    if rest and rest[0] == "fuse":
        rest = rest[1:]
    if "fuse" in rest:
        raise StageOrderError("fuse must be the first stage")
    if rest and rest[-1] == "tracklet_rerank":
        rest = rest[:-1]
    if "tracklet_rerank" in rest:
        raise StageOrderError("tracklet_rerank is only valid as the terminal stage")
    if rest and rest[-1] in RANKER_STAGES:
        rest = rest[:-1]
    stray = [n for n in rest if n in RANKER_STAGES]
    if stray:
        raise StageOrderError(
            "kreciprocal/diffusion must be the single terminal ranking stage "
            "(optionally followed by tracklet_rerank)"
        )


@dataclass(frozen=True)
class PipelineConfig:
    query: tuple[str, ...]
    gallery: tuple[str, ...]
    output_dir: str
    query_meta: str | None = None
    gallery_meta: str | None = None
    stages: tuple[StageSpec, ...] = ()
    topk: int = 100
    cmc_ks: tuple[int, ...] = (1, 5, 10, 20)
    map_ks: tuple[int, ...] = (100,)
    filter_same_camera: bool = False
    figures: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "query", tuple(str(p) for p in self.query))
        object.__setattr__(self, "gallery", tuple(str(p) for p in self.gallery))
        stages = tuple(
            s if isinstance(s, StageSpec) else StageSpec(**s) for s in self.stages
        )
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "cmc_ks", tuple(int(k) for k in self.cmc_ks))
        object.__setattr__(self, "map_ks", tuple(int(k) for k in self.map_ks))
        if not self.query or not self.gallery:
            raise ValidationError("query and gallery require at least one member path each")
        if self.topk < 1:
            raise ValidationError("topk must be at least 1")
        validate_stage_order([s.name for s in stages])

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        schema = json.loads(
            resources.files("reidrank.schemas")
            .joinpath("pipeline_config.schema.json")
            .read_text("utf-8")
        )
        try:
            jsonschema.validate(raw, schema)
        except jsonschema.ValidationError as exc:
            raise ValidationError(f"invalid pipeline config: {exc.message}") from exc
        raw = dict(raw)
        raw["stages"] = tuple(
            StageSpec(s["name"], dict(s.get("params", {}))) for s in raw.get("stages", [])
        )
        return cls(**raw)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "query": list(self.query),
            "gallery": list(self.gallery),
            "query_meta": self.query_meta,
            "gallery_meta": self.gallery_meta,
            "stages": [{"name": s.name, "params": dict(s.params)} for s in self.stages],
            "output_dir": self.output_dir,
            "topk": self.topk,
            "cmc_ks": list(self.cmc_ks),
            "map_ks": list(self.map_ks),
            "filter_same_camera": self.filter_same_camera,
            "figures": self.figures,
            "seed": self.seed,
        }


def default_stage_chain() -> tuple[StageSpec, ...]:
    """The default submission chain: fuse, tracklet query expansion,
    database augmentation, then reciprocal re-ranking."""
    return (
        StageSpec("fuse"),
        StageSpec("dex"),
        StageSpec("dba"),
        StageSpec("kreciprocal"),
    )


@dataclass(frozen=True)
class PipelineResult:
    ranks: RankList
    report: EvalReport | None
    submission_path: Path
    manifest_path: Path
    metrics_path: Path | None
    figure_paths: tuple[Path, ...]


def _load_ensemble(paths: Sequence[str]) -> EnsembleInput:
    return EnsembleInput(tuple(load_embeddings(p) for p in paths))


def _check_meta(meta: CatalogMeta, matrix: EmbeddingMatrix, side: str) -> None:
    if meta.image_ids != matrix.row_ids:
        raise ValidationError(f"{side} metadata image ids do not match embedding row ids")


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Execute the configured stage chain and write all run artifacts."""
    names = [s.name for s in cfg.stages]
    validate_stage_order(names)

    q_ens = _load_ensemble(cfg.query)
    g_ens = _load_ensemble(cfg.gallery)
    if len(q_ens) != len(g_ens):
        raise ValidationError("query and gallery must have the same number of members")
    if len(q_ens) > 1 and "fuse" not in names:
        raise StageOrderError("multi-member ensembles require a fuse stage")

    query_meta = load_metadata(cfg.query_meta) if cfg.query_meta else None
    gallery_meta = load_metadata(cfg.gallery_meta) if cfg.gallery_meta else None
    if query_meta is not None:
        _check_meta(query_meta, q_ens.members[0], "query")
    if gallery_meta is not None:
        _check_meta(gallery_meta, g_ens.members[0], "gallery")

    tracklets: TrackletTable | None = None
    if any(n in TRACKLET_STAGES for n in names):
        if gallery_meta is None:
            raise ValidationError("dex/tracklet_rerank stages require gallery metadata")
        tracklets = TrackletTable.from_meta(gallery_meta)

    if "fuse" in names:
        q = fuse_ensemble(q_ens)
        g = fuse_ensemble(g_ens)
    else:
        q = l2_normalize_rows(q_ens.members[0])
        g = l2_normalize_rows(g_ens.members[0])

    ranker_scores = None
    terminal_tracklet = False
    for stage in cfg.stages:
        p = stage.params
        if stage.name == "fuse":
            continue
        if stage.name == "dex":
            q = dex_expand(q, g, tracklets, DexParams(**p))
        elif stage.name == "aqe":
            q = aqe_expand(q, g, p["k"])
        elif stage.name == "alpha_qe":
            q = alpha_qe_expand(q, g, **p)
        elif stage.name == "dba":
            g = dba_augment(g, DbaParams(**p))
        elif stage.name == "kreciprocal":
            ranker_scores = -krerank_distances(q, g, KRParams(**p))
        elif stage.name == "diffusion":
            ranker_scores = diffusion_scores(q, g, DiffusionParams(**p))
        elif stage.name == "tracklet_rerank":
            terminal_tracklet = True

    if terminal_tracklet:
        if ranker_scores is None:
            ranks = tracklet_rerank(q, g, tracklets)
        else:
            ranks = tracklet_rerank_scores(ranker_scores, tracklets)
    elif ranker_scores is not None:
        ranks = rank_topk(ranker_scores)
    else:
        ranks = rank_topk(cosine_similarity(q, g))

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    submission_path = out_dir / SUBMISSION_FILE
    emit_submission(ranks, g.row_ids, submission_path, topk=cfg.topk)

    report = None
    metrics_path = None
    figure_paths: tuple[Path, ...] = ()
    if (
        query_meta is not None
        and gallery_meta is not None
        and query_meta.has_identities
        and gallery_meta.has_identities
    ):
        report = evaluate(
            ranks,
            query_meta,
            gallery_meta,
            cmc_ks=cfg.cmc_ks,
            map_ks=cfg.map_ks,
            filter_same_camera=cfg.filter_same_camera,
        )
        from .report import render_figures, write_metrics_csv, write_per_query_ap_csv

        metrics_path = write_metrics_csv(report, out_dir / METRICS_FILE)
        write_per_query_ap_csv(report, query_meta, out_dir / PER_QUERY_AP_FILE)
        if cfg.figures:
            figure_paths = tuple(render_figures(report, out_dir))

    manifest_path = _write_manifest(cfg, submission_path, metrics_path, out_dir)
    return PipelineResult(ranks, report, submission_path, manifest_path, metrics_path, figure_paths)


def _input_files(cfg: PipelineConfig) -> list[Path]:
    files: list[Path] = []
    for p in list(cfg.query) + list(cfg.gallery):
        files.append(Path(p))
        files.append(sidecar_path(p))
    for p in (cfg.query_meta, cfg.gallery_meta):
        if p:
            files.append(Path(p))
    return files


def _write_manifest(
    cfg: PipelineConfig,
    submission_path: Path,
    metrics_path: Path | None,
    out_dir: Path,
) -> Path:
    manifest = {
        "tool": {"name": "reidrank", "version": VERSION},
        "config": cfg.to_dict(),
        "inputs": {str(p): sha256_file(p) for p in _input_files(cfg)},
        "outputs": {
            SUBMISSION_FILE: sha256_file(submission_path),
            **({METRICS_FILE: sha256_file(metrics_path)} if metrics_path else {}),
        },
    }
    path = out_dir / MANIFEST_FILE
    _atomic_write_text(path, json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path


def rerun_from_manifest(manifest_path: str | Path) -> PipelineResult:
    """Re-execute a run from its manifest; inputs must still be in place."""
    try:
        manifest = json.loads(Path(manifest_path).read_text("utf-8"))
        raw_cfg = manifest["config"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise ValidationError(f"unreadable manifest {manifest_path}: {exc}") from exc
    return run_pipeline(PipelineConfig.from_dict(raw_cfg))
