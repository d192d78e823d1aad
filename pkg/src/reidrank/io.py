"""On-disk formats: embedding files, metadata tables, submissions.

An embedding file is a raw little-endian float32 payload (row-major,
exactly n*d*4 bytes) with a JSON sidecar at ``<payload path>.json``
declaring n, d, the precision tag, row ids and the normalized flag.
Metadata is a comma-delimited table with an ``image_id,tracklet_id``
header plus optional ``identity_id`` and ``camera_id`` columns. All writes
go through a temp file and rename, and every format round-trips
byte-identically.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
from pathlib import Path

import numpy as np

from .core import CatalogMeta, EmbeddingMatrix, RankList, ordinal_scores
from .errors import (
    DuplicateIdError,
    FileFormatError,
    LengthMismatchError,
    MalformedHeaderError,
    ValidationError,
)

PRECISION_TAG = "float32"


def sidecar_path(payload_path: str | Path) -> Path:
    return Path(str(payload_path) + ".json")


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def save_embeddings(m: EmbeddingMatrix, path: str | Path) -> None:
    """Write payload to ``path`` and the descriptor sidecar next to it."""
    path = Path(path)
    header = {
        "n": m.n,
        "d": m.d,
        "dtype": PRECISION_TAG,
        "normalized": m.normalized,
        "row_ids": list(m.row_ids),
    }
    _atomic_write_bytes(path, np.ascontiguousarray(m.data, dtype="<f4").tobytes())
    _atomic_write_text(sidecar_path(path), json.dumps(header, sort_keys=True, indent=1) + "\n")


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    path = Path(path)
    try:
        header = json.loads(sidecar_path(path).read_text("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedHeaderError(f"unreadable sidecar for {path}: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeaderError(f"sidecar for {path} is not an object")
    try:
        n, d = int(header["n"]), int(header["d"])
        dtype = header["dtype"]
        normalized = bool(header["normalized"])
        row_ids = [str(r) for r in header["row_ids"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"sidecar for {path} misses or mangles a field: {exc}") from exc
    if dtype != PRECISION_TAG:
        raise MalformedHeaderError(f"unsupported precision tag {dtype!r}")
    if n < 0 or d < 1:
        raise MalformedHeaderError(f"invalid shape n={n}, d={d}")
    if len(row_ids) != n:
        raise LengthMismatchError(f"{len(row_ids)} row ids declared for n={n}")
    if len(set(row_ids)) != len(row_ids):
        raise DuplicateIdError(f"duplicate row id in {sidecar_path(path)}")
    payload = path.read_bytes()
    if len(payload) != n * d * 4:
        raise LengthMismatchError(
            f"payload of {path} is {len(payload)} bytes, expected {n * d * 4}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)
    try:
        return EmbeddingMatrix(data, tuple(row_ids), normalized=normalized)
    except ValidationError as exc:
        raise MalformedHeaderError(f"{path} contents violate the header: {exc}") from exc


def save_metadata(meta: CatalogMeta, path: str | Path) -> None:
    columns = ["image_id", "tracklet_id"]
    if meta.identity_ids is not None:
        columns.append("identity_id")
    if meta.camera_ids is not None:
        columns.append("camera_id")
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for i in range(len(meta)):
        row = [meta.image_ids[i], meta.tracklet_ids[i]]
        if meta.identity_ids is not None:
            row.append(meta.identity_ids[i])
        if meta.camera_ids is not None:
            row.append(meta.camera_ids[i])
        writer.writerow(row)
    _atomic_write_text(Path(path), buf.getvalue())


def load_metadata(path: str | Path) -> CatalogMeta:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "image_id" not in fields or "tracklet_id" not in fields:
            raise MalformedHeaderError(
                f"{path} must declare image_id and tracklet_id columns"
            )
        records = list(reader)
    image_ids = [r["image_id"] for r in records]
    if len(set(image_ids)) != len(image_ids):
        raise DuplicateIdError(f"duplicate image_id in {path}")
    try:
        return CatalogMeta(
            tuple(image_ids),
            tuple(r["tracklet_id"] for r in records),
            tuple(r["identity_id"] for r in records) if "identity_id" in fields else None,
            tuple(r["camera_id"] for r in records) if "camera_id" in fields else None,
        )
    except ValidationError as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from exc


def emit_submission(
    ranks: RankList, gallery_ids: tuple[str, ...], path: str | Path, topk: int = 100
) -> None:
    """One line per query, space-separated gallery ids of the top ranks."""
    if topk < 1:
        raise ValidationError("topk must be at least 1")
    if ranks.indices.size and int(ranks.indices.max()) >= len(gallery_ids):
        raise ValidationError("rank list indexes beyond the gallery ids")
    lines = []
    for row in ranks.indices[:, :topk]:
        lines.append(" ".join(gallery_ids[j] for j in row))
    text = "".join(line + "\n" for line in lines)
    _atomic_write_text(Path(path), text)


def load_submission(path: str | Path, gallery_ids: tuple[str, ...]) -> RankList:
    """Read a submission back as a rank list over the given gallery order.

    All lines must list the same number of ids; scores are ordinal.
    """
    index_of = {gid: i for i, gid in enumerate(gallery_ids)}
    rows: list[list[int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            ids = line.split()
            try:
                rows.append([index_of[i] for i in ids])
            except KeyError as exc:
                raise ValidationError(f"{path}:{lineno}: unknown gallery id {exc}") from exc
    if not rows:
        return RankList(np.empty((0, 0), dtype=np.int64), np.empty((0, 0)))
    depth = len(rows[0])
    if any(len(r) != depth for r in rows):
        raise ValidationError(f"{path}: all lines must list the same number of ids")
    indices = np.asarray(rows, dtype=np.int64)
    return RankList(indices, ordinal_scores(len(rows), depth))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def is_io_error(exc: BaseException) -> bool:
    """True for the error family mapped to CLI exit code 2."""
    return isinstance(exc, (OSError, FileFormatError))
