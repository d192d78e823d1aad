"""Evaluation report rendering: delimited metrics files plus figures.

The metrics file is a two-column ``metric,value`` CSV; per-query average
precisions go to a second CSV. Figures (CMC curve and the per-query AP
histogram) are rendered headlessly to PNG next to the delimited output.
"""

from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .core import CatalogMeta
from .io import _atomic_write_text
from .metrics import EvalReport


def write_metrics_csv(report: EvalReport, path: str | Path) -> Path:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "value"])
    writer.writerows(report.key_values())
    _atomic_write_text(Path(path), buf.getvalue())
    return Path(path)


def write_per_query_ap_csv(
    report: EvalReport, query_meta: CatalogMeta, path: str | Path
) -> Path:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "ap"])
    for qi, ap in zip(report.scored_query_indices, report.per_query_ap):
        writer.writerow([query_meta.image_ids[qi], f"{ap:.6f}"])
    _atomic_write_text(Path(path), buf.getvalue())
    return Path(path)


def format_report_text(report: EvalReport) -> str:
    """Console-friendly summary; CMC rows limited to the requested few."""
    rows = [(k, v) for k, v in report.key_values() if not k.startswith("cmc@")]
    cmc_rows = [(k, v) for k, v in report.key_values() if k.startswith("cmc@")]
    shown = rows + [r for r in cmc_rows if int(r[0].split("@")[1]) in (1, 5, 10, 20)]
    width = max(len(k) for k, _ in shown)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in shown)


def render_figures(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Write cmc_curve.png and ap_hist.png under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    ks = sorted(report.cmc)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(ks, [report.cmc[k] for k in ks], marker="o", markersize=3)
    ax.set_xlabel("rank $k$")
    ax.set_ylabel("match rate")
    ax.set_title("Cumulative match curve")
    ax.set_ylim(0, 1.05)
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    path = out_dir / "cmc_curve.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.hist(report.per_query_ap, bins=20, range=(0.0, 1.0), edgecolor="white")
    ax.axvline(report.map_full, color="crimson", linestyle="--",
               label=f"mAP = {report.map_full:.3f}")
    ax.set_xlabel("average precision")
    ax.set_ylabel("queries")
    ax.set_title("Per-query AP distribution")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "ap_hist.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written
