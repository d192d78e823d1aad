import numpy as np
import pytest

from reidrank import (
    SynthSpec,
    cosine_similarity,
    evaluate,
    fuse_ensemble,
    generate,
    rank_topk,
)
from reidrank.errors import InvalidSpecError


SMALL = SynthSpec(
    n_ids=6,
    tracklets_per_id=2,
    images_per_tracklet=(2, 4),
    d=16,
    sigma_id=0.2,
    sigma_track=0.05,
    n_models=2,
    scale_jitter=0.05,
    queries_per_id=2,
    seed=7,
)


class TestSpecValidation:
    def test_counts(self):
        with pytest.raises(InvalidSpecError):
            SynthSpec(n_ids=0)
        with pytest.raises(InvalidSpecError):
            SynthSpec(images_per_tracklet=(3, 2))
        with pytest.raises(InvalidSpecError):
            SynthSpec(images_per_tracklet=(0, 2))

    def test_spreads(self):
        with pytest.raises(InvalidSpecError):
            SynthSpec(sigma_id=-0.1)


class TestGenerate:
    def test_deterministic_bytes(self):
        a = generate(SMALL)
        b = generate(SMALL)
        for ma, mb in zip(a.gallery.members, b.gallery.members):
            assert ma.data.tobytes() == mb.data.tobytes()
        for ma, mb in zip(a.query.members, b.query.members):
            assert ma.data.tobytes() == mb.data.tobytes()
        assert a.gallery_meta == b.gallery_meta

    def test_seed_changes_data(self):
        a = generate(SMALL)
        b = generate(SynthSpec(**{**SMALL.__dict__, "seed": 8}))
        assert a.gallery.members[0].data.tobytes() != b.gallery.members[0].data.tobytes()

    def test_tracklets_partition_gallery(self):
        ds = generate(SMALL)
        members = [i for group in ds.tracklets.groups.values() for i in group]
        assert sorted(members) == list(range(ds.gallery.n))

    def test_tracklet_members_share_identity(self):
        ds = generate(SMALL)
        idents = np.asarray(ds.gallery_meta.identity_ids)
        for group in ds.tracklets.groups.values():
            assert len(set(idents[list(group)])) == 1

    def test_query_tracklets_absent_from_gallery(self):
        ds = generate(SMALL)
        assert not set(ds.query_meta.tracklet_ids) & set(ds.gallery_meta.tracklet_ids)

    def test_rows_unit_norm(self):
        ds = generate(SMALL)
        for m in ds.query.members + ds.gallery.members:
            np.testing.assert_allclose(np.linalg.norm(m.data, axis=1), 1.0, atol=1e-12)

    def test_member_count_and_shapes(self):
        ds = generate(SMALL)
        assert len(ds.query.members) == 2
        assert ds.query.n == SMALL.n_ids * SMALL.queries_per_id
        lo, hi = SMALL.images_per_tracklet
        assert SMALL.n_ids * SMALL.tracklets_per_id * lo <= ds.gallery.n
        assert ds.gallery.n <= SMALL.n_ids * SMALL.tracklets_per_id * hi

    def test_zero_spread_gives_perfect_baseline(self):
        spec = SynthSpec(
            n_ids=4, tracklets_per_id=2, images_per_tracklet=(2, 3), d=8,
            sigma_id=0.0, sigma_track=0.0, n_models=1, scale_jitter=0.0,
            queries_per_id=1, seed=3,
        )
        ds = generate(spec)
        ranks = rank_topk(
            cosine_similarity(fuse_ensemble(ds.query), fuse_ensemble(ds.gallery))
        )
        report = evaluate(ranks, ds.query_meta, ds.gallery_meta)
        assert report.map_full == 1.0

    def test_two_antipodal_identities_separate(self):
        spec = SynthSpec(
            n_ids=2, tracklets_per_id=2, images_per_tracklet=(3, 3), d=4,
            sigma_id=0.02, sigma_track=0.01, n_models=1, scale_jitter=0.0,
            queries_per_id=2, seed=11,
        )
        ds = generate(spec)
        q = fuse_ensemble(ds.query)
        g = fuse_ensemble(ds.gallery)
        report = evaluate(rank_topk(cosine_similarity(q, g)), ds.query_meta, ds.gallery_meta)
        assert report.cmc[1] == 1.0
