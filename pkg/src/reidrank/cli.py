"""Command-line interface.

Subcommands: ``generate`` (synthetic datasets), ``rank`` (plain cosine
ranking), ``rerank`` (a single re-ranking stage), ``eval`` (score a
submission file), ``pipeline`` (full configured runs). Flags override
config file values. Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .errors import ReidrankError, ValidationError
from .io import (
    is_io_error,
    load_metadata,
    load_submission,
    save_embeddings,
    save_metadata,
)
from .metrics import evaluate
from .pipeline import (
    PipelineConfig,
    StageSpec,
    STAGE_NAMES,
    default_stage_chain,
    run_pipeline,
)
from .report import format_report_text, render_figures, write_metrics_csv, write_per_query_ap_csv
from .synth import SynthSpec, generate as synth_generate

#: CLI flags accepted per stage (None-valued flags are simply not forwarded)
_STAGE_FLAGS = {
    "fuse": set(),
    "tracklet_rerank": set(),
    "dex": {"k", "alpha", "renormalize"},
    "aqe": {"k"},
    "alpha_qe": {"k", "alpha", "renormalize"},
    "dba": {"k", "include_self", "weighting"},
    "kreciprocal": {"k1", "k2", "lam", "sigma_weighting", "local_expansion"},
    "diffusion": {"k", "k_q", "alpha", "t_max", "gamma", "tol", "edge_mode"},
}


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except (ReidrankError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2 if is_io_error(exc) else 1)

    return wrapper


@click.group()
@click.version_option(package_name="reidrank")
def main():
    """Embedding expansion and re-ranking over precomputed descriptors."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n-ids", default=100, show_default=True)
@click.option("--tracklets-per-id", default=3, show_default=True)
@click.option("--images-min", default=4, show_default=True)
@click.option("--images-max", default=8, show_default=True)
@click.option("--dim", "d", default=128, show_default=True)
@click.option("--sigma-id", default=0.07, show_default=True)
@click.option("--sigma-track", default=0.05, show_default=True)
@click.option("--n-models", default=1, show_default=True)
@click.option("--scale-jitter", default=0.08, show_default=True)
@click.option("--queries-per-id", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_exit_codes
def generate(out_dir, n_ids, tracklets_per_id, images_min, images_max, d,
             sigma_id, sigma_track, n_models, scale_jitter, queries_per_id, seed):
    """Generate a seeded synthetic dataset and write it to --out."""
    spec = SynthSpec(
        n_ids=n_ids,
        tracklets_per_id=tracklets_per_id,
        images_per_tracklet=(images_min, images_max),
        d=d,
        sigma_id=sigma_id,
        sigma_track=sigma_track,
        n_models=n_models,
        scale_jitter=scale_jitter,
        queries_per_id=queries_per_id,
        seed=seed,
    )
    ds = synth_generate(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for m, member in enumerate(ds.query.members):
        save_embeddings(member, out / f"query_m{m}.bin")
    for m, member in enumerate(ds.gallery.members):
        save_embeddings(member, out / f"gallery_m{m}.bin")
    save_metadata(ds.query_meta, out / "query_meta.csv")
    save_metadata(ds.gallery_meta, out / "gallery_meta.csv")
    click.echo(
        f"wrote {ds.query.n} queries / {ds.gallery.n} gallery images "
        f"({n_models} member(s), d={d}) to {out}"
    )


def _run_and_report(cfg: PipelineConfig) -> None:
    result = run_pipeline(cfg)
    click.echo(f"submission: {result.submission_path}")
    click.echo(f"manifest:   {result.manifest_path}")
    if result.report is not None:
        click.echo(format_report_text(result.report))


_common_io = [
    click.option("--query", "query", multiple=True, required=True,
                 help="Query embedding payload (repeat for ensemble members)."),
    click.option("--gallery", "gallery", multiple=True, required=True),
    click.option("--query-meta", default=None),
    click.option("--gallery-meta", default=None),
    click.option("--out", "output_dir", required=True, type=click.Path(file_okay=False)),
    click.option("--topk", default=100, show_default=True),
    click.option("--figures/--no-figures", default=True, show_default=True),
    click.option("--filter-same-camera", is_flag=True, default=False),
]


def _with_options(options):
    def deco(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return deco


@main.command()
@_with_options(_common_io)
@_exit_codes
def rank(query, gallery, query_meta, gallery_meta, output_dir, topk, figures,
         filter_same_camera):
    """Plain cosine ranking (the empty stage chain)."""
    cfg = PipelineConfig(
        query=query,
        gallery=gallery,
        query_meta=query_meta,
        gallery_meta=gallery_meta,
        stages=(),
        output_dir=output_dir,
        topk=topk,
        figures=figures,
        filter_same_camera=filter_same_camera,
    )
    _run_and_report(cfg)


@main.command()
@click.option("--stage", required=True, type=click.Choice(STAGE_NAMES))
@_with_options(_common_io)
@click.option("--k", default=None, type=int)
@click.option("--alpha", default=None, type=float)
@click.option("--renormalize/--no-renormalize", default=None)
@click.option("--include-self/--no-include-self", "include_self", default=None)
@click.option("--weighting", default=None, type=click.Choice(["uniform", "similarity"]))
@click.option("--k1", default=None, type=int)
@click.option("--k2", default=None, type=int)
@click.option("--lambda", "lam", default=None, type=float)
@click.option("--sigma-weighting/--no-sigma-weighting", "sigma_weighting", default=None)
@click.option("--local-expansion/--no-local-expansion", "local_expansion", default=None)
@click.option("--kq", "k_q", default=None, type=int)
@click.option("--t-max", default=None, type=int)
@click.option("--gamma", default=None, type=float)
@click.option("--tol", default=None, type=float)
@click.option("--edge-mode", default=None, type=click.Choice(["union", "mutual"]))
@_exit_codes
def rerank(stage, query, gallery, query_meta, gallery_meta, output_dir, topk,
           figures, filter_same_camera, **flags):
    """Apply one re-ranking stage on top of the plain ranking."""
    provided = {k: v for k, v in flags.items() if v is not None}
    unknown = set(provided) - _STAGE_FLAGS[stage]
    if unknown:
        raise ValidationError(
            f"flags {sorted(unknown)} do not apply to stage {stage!r}"
        )
    stages = [StageSpec(stage, provided)]
    if len(query) > 1 and stage != "fuse":
        stages.insert(0, StageSpec("fuse"))
    cfg = PipelineConfig(
        query=query,
        gallery=gallery,
        query_meta=query_meta,
        gallery_meta=gallery_meta,
        stages=tuple(stages),
        output_dir=output_dir,
        topk=topk,
        figures=figures,
        filter_same_camera=filter_same_camera,
    )
    _run_and_report(cfg)


@main.command("eval")
@click.option("--submission", required=True, type=click.Path(dir_okay=False))
@click.option("--query-meta", required=True)
@click.option("--gallery-meta", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--cmc-ks", default="1,5,10,20", show_default=True)
@click.option("--map-ks", default="100", show_default=True)
@click.option("--filter-same-camera", is_flag=True, default=False)
@click.option("--figures/--no-figures", default=True, show_default=True)
@_exit_codes
def eval_cmd(submission, query_meta, gallery_meta, out_dir, cmc_ks, map_ks,
             filter_same_camera, figures):
    """Score an existing submission file against identity labels."""
    q_meta = load_metadata(query_meta)
    g_meta = load_metadata(gallery_meta)
    ranks = load_submission(submission, g_meta.image_ids)
    if ranks.n_queries != len(q_meta):
        raise ValidationError(
            f"submission has {ranks.n_queries} lines but query metadata has {len(q_meta)} rows"
        )
    report = evaluate(
        ranks,
        q_meta,
        g_meta,
        cmc_ks=[int(k) for k in cmc_ks.split(",") if k],
        map_ks=[int(k) for k in map_ks.split(",") if k],
        filter_same_camera=filter_same_camera,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(report, out / "metrics.csv")
    write_per_query_ap_csv(report, q_meta, out / "per_query_ap.csv")
    if figures:
        render_figures(report, out)
    click.echo(format_report_text(report))


def _apply_override(raw: dict, dotted: str, value: str) -> None:
    """Apply a --set override like stages.1.params.k=40 onto the raw config."""
    keys = dotted.split(".")
    target = raw
    for key in keys[:-1]:
        if isinstance(target, list):
            target = target[int(key)]
        else:
            target = target.setdefault(key, {})
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    last = keys[-1]
    if isinstance(target, list):
        target[int(last)] = parsed
    else:
        target[last] = parsed


@main.command("pipeline")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--output-dir", default=None)
@click.option("--topk", default=None, type=int)
@click.option("--figures/--no-figures", default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override any config field by dotted path, e.g. stages.1.params.k=40")
@_exit_codes
def pipeline_cmd(config_path, output_dir, topk, figures, overrides):
    """Run a configured stage chain end to end."""
    try:
        raw = json.loads(Path(config_path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {config_path} is not valid JSON: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        dotted, value = item.split("=", 1)
        try:
            _apply_override(raw, dotted, value)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ValidationError(f"cannot apply override {item!r}: {exc}") from exc
    if output_dir is not None:
        raw["output_dir"] = output_dir
    if topk is not None:
        raw["topk"] = topk
    if figures is not None:
        raw["figures"] = figures
    _run_and_report(PipelineConfig.from_dict(raw))


@main.command("default-config")
@click.option("--out-dir", default="run", show_default=True,
              help="output_dir value to embed in the emitted config")
def default_config(out_dir):
    """Print a pipeline config for the default DEx+DBA+k-reciprocal chain."""
    cfg = PipelineConfig(
        query=("query_m0.bin",),
        gallery=("gallery_m0.bin",),
        query_meta="query_meta.csv",
        gallery_meta="gallery_meta.csv",
        stages=default_stage_chain(),
        output_dir=out_dir,
    )
    click.echo(json.dumps(cfg.to_dict(), indent=2))


if __name__ == "__main__":
    main()
