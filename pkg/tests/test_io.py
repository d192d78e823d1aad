import json

import numpy as np
import pytest

from reidrank import CatalogMeta, EmbeddingMatrix, rank_topk
from reidrank.errors import (
    DuplicateIdError,
    LengthMismatchError,
    MalformedHeaderError,
    ValidationError,
)
from reidrank.io import (
    emit_submission,
    load_embeddings,
    load_metadata,
    load_submission,
    save_embeddings,
    save_metadata,
    sidecar_path,
)

from conftest import make_matrix


def f32_matrix(rng, n, d, normalize=False):
    """Matrix whose values are exactly float32-representable."""
    data = rng.standard_normal((n, d)).astype(np.float32)
    if normalize:
        data /= np.linalg.norm(data.astype(np.float64), axis=1, keepdims=True)
    m = EmbeddingMatrix(data.astype(np.float64), tuple(f"im{i}" for i in range(n)))
    if normalize:
        from reidrank import l2_normalize_rows

        return l2_normalize_rows(m)
    return m


class TestEmbeddingRoundTrip:
    def test_save_load_identity_for_f32_values(self, rng, tmp_path):
        m = f32_matrix(rng, 7, 5)
        path = tmp_path / "m.bin"
        save_embeddings(m, path)
        back = load_embeddings(path)
        assert (back.data == m.data).all()
        assert back.row_ids == m.row_ids
        assert back.normalized == m.normalized

    def test_save_load_save_bytes_identical(self, rng, tmp_path):
        m = make_matrix(rng.standard_normal((6, 9)))
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_embeddings(m, p1)
        save_embeddings(load_embeddings(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert sidecar_path(p1).read_bytes() == sidecar_path(p2).read_bytes()

    def test_payload_length_mismatch(self, tmp_path):
        path = tmp_path / "m.bin"
        save_embeddings(make_matrix([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), path)
        header = json.loads(sidecar_path(path).read_text())
        header["n"] = 2
        sidecar_path(path).write_text(json.dumps(header))
        with pytest.raises(LengthMismatchError):
            load_embeddings(path)

    def test_malformed_sidecar(self, tmp_path):
        path = tmp_path / "m.bin"
        path.write_bytes(b"\x00" * 8)
        sidecar_path(path).write_text("{not json")
        with pytest.raises(MalformedHeaderError):
            load_embeddings(path)
        sidecar_path(path).write_text(json.dumps({"n": 1, "d": 2}))
        with pytest.raises(MalformedHeaderError):
            load_embeddings(path)

    def test_wrong_precision_tag(self, tmp_path):
        path = tmp_path / "m.bin"
        save_embeddings(make_matrix([[1.0, 0.0]]), path)
        header = json.loads(sidecar_path(path).read_text())
        header["dtype"] = "float64"
        sidecar_path(path).write_text(json.dumps(header))
        with pytest.raises(MalformedHeaderError):
            load_embeddings(path)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "m.bin"
        save_embeddings(make_matrix([[1.0, 0.0], [0.0, 1.0]]), path)
        header = json.loads(sidecar_path(path).read_text())
        header["row_ids"] = ["a", "a"]
        sidecar_path(path).write_text(json.dumps(header))
        with pytest.raises(DuplicateIdError):
            load_embeddings(path)

    def test_id_count_mismatch(self, tmp_path):
        path = tmp_path / "m.bin"
        save_embeddings(make_matrix([[1.0, 0.0], [0.0, 1.0]]), path)
        header = json.loads(sidecar_path(path).read_text())
        header["row_ids"] = ["a"]
        sidecar_path(path).write_text(json.dumps(header))
        with pytest.raises(LengthMismatchError):
            load_embeddings(path)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_embeddings(tmp_path / "absent.bin")


class TestMetadataRoundTrip:
    def test_full_columns(self, tmp_path):
        meta = CatalogMeta(("a", "b"), ("t1", "t1"), ("x", "y"), ("c1", "c2"))
        path = tmp_path / "meta.csv"
        save_metadata(meta, path)
        assert load_metadata(path) == meta

    def test_optional_columns_absent(self, tmp_path):
        meta = CatalogMeta(("a", "b"), ("t1", "t2"))
        path = tmp_path / "meta.csv"
        save_metadata(meta, path)
        back = load_metadata(path)
        assert back == meta
        assert back.identity_ids is None and back.camera_ids is None

    def test_save_load_save_bytes_identical(self, tmp_path):
        meta = CatalogMeta(("a", "b", "c"), ("t1", "t1", "t2"), ("x", "y", "x"))
        p1, p2 = tmp_path / "m1.csv", tmp_path / "m2.csv"
        save_metadata(meta, p1)
        save_metadata(load_metadata(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_required_column(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text("image_id,camera_id\na,c1\n")
        with pytest.raises(MalformedHeaderError):
            load_metadata(path)

    def test_duplicate_image_id(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text("image_id,tracklet_id\na,t1\na,t2\n")
        with pytest.raises(DuplicateIdError):
            load_metadata(path)


class TestSubmission:
    def test_single_query_line(self, tmp_path):
        ranks = rank_topk(np.array([[0.2, 0.9, 0.1]]))
        path = tmp_path / "sub.txt"
        emit_submission(ranks, ("a", "b", "c"), path)
        assert path.read_text() == "b a c\n"

    def test_truncates_to_topk(self, tmp_path, rng):
        ng = 150
        ranks = rank_topk(rng.standard_normal((2, ng)))
        path = tmp_path / "sub.txt"
        emit_submission(ranks, tuple(f"g{i}" for i in range(ng)), path, topk=100)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert all(len(line.split()) == 100 for line in lines)

    def test_zero_queries_empty_file(self, tmp_path):
        ranks = rank_topk(np.empty((0, 3)))
        path = tmp_path / "sub.txt"
        emit_submission(ranks, ("a", "b", "c"), path)
        assert path.read_text() == ""

    def test_load_round_trip(self, tmp_path, rng):
        ranks = rank_topk(rng.standard_normal((3, 8)))
        ids = tuple(f"g{i}" for i in range(8))
        path = tmp_path / "sub.txt"
        emit_submission(ranks, ids, path)
        back = load_submission(path, ids)
        np.testing.assert_array_equal(back.indices, ranks.indices)

    def test_unknown_id_rejected(self, tmp_path):
        path = tmp_path / "sub.txt"
        path.write_text("a b zz\n")
        with pytest.raises(ValidationError):
            load_submission(path, ("a", "b", "c"))

    def test_ragged_lines_rejected(self, tmp_path):
        path = tmp_path / "sub.txt"
        path.write_text("a b\nc\n")
        with pytest.raises(ValidationError):
            load_submission(path, ("a", "b", "c"))


class TestAtomicity:
    def test_no_temp_files_left(self, tmp_path, rng):
        m = f32_matrix(rng, 3, 4)
        save_embeddings(m, tmp_path / "m.bin")
        leftovers = [p for p in tmp_path.iterdir() if ".tmp" in p.name]
        assert leftovers == []
