import numpy as np
import pytest

from reidrank import (
    DexParams,
    EnsembleInput,
    TrackletTable,
    alpha_qe_expand,
    aqe_expand,
    cosine_similarity,
    dex_expand,
    fuse_ensemble,
    rank_topk,
    tracklet_gallery,
    tracklet_rerank,
    tracklet_rerank_scores,
)
from reidrank.errors import (
    ClampedParameterWarning,
    InconsistentEnsembleError,
    ValidationError,
)

from conftest import make_matrix, random_normalized


def singleton_table(n):
    return TrackletTable({f"t{i}": (i,) for i in range(n)}, n)


class TestFuseEnsemble:
    def test_mean_then_normalize(self):
        out = fuse_ensemble([make_matrix([[1, 0]]), make_matrix([[0, 1]])])
        np.testing.assert_allclose(out.data, [[0.70711, 0.70711]], atol=1e-5)

    def test_single_member_identity(self):
        member = make_matrix([[0.6, 0.8]])
        out = fuse_ensemble([member])
        assert out is member

    def test_hand_mean(self):
        # mean of (1,0),(1,0),(0,1) = (2/3, 1/3); norm sqrt(5)/3
        out = fuse_ensemble([make_matrix([[1, 0]])] * 2 + [make_matrix([[0, 1]])])
        expected = np.array([[2 / 3, 1 / 3]]) / (np.sqrt(5) / 3)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)
        np.testing.assert_allclose(out.data, [[0.89443, 0.44721]], atol=1e-5)

    def test_member_permutation_invariance(self, rng):
        members = [random_normalized(rng, 6, 5) for _ in range(3)]
        a = fuse_ensemble(members)
        b = fuse_ensemble(members[::-1])
        # summation order differs, so equality holds only to rounding
        np.testing.assert_allclose(a.data, b.data, atol=1e-14)

    def test_dimension_preserved_for_any_ensemble_size(self, rng):
        for count in (1, 2, 5):
            members = [random_normalized(rng, 4, 9) for _ in range(count)]
            assert fuse_ensemble(members).d == 9

    def test_inconsistent_members_rejected(self):
        with pytest.raises(InconsistentEnsembleError):
            EnsembleInput((make_matrix([[1, 0]]), make_matrix([[1, 0, 0]])))
        with pytest.raises(InconsistentEnsembleError):
            EnsembleInput(
                (make_matrix([[1, 0]], ids=("a",)), make_matrix([[1, 0]], ids=("b",)))
            )

    def test_empty_ensemble_rejected(self):
        with pytest.raises(InconsistentEnsembleError):
            EnsembleInput(())


class TestTrackletGallery:
    def test_two_member_mean(self):
        g = make_matrix([[2, 0], [0, 2]], ids=("a", "b"))
        table = TrackletTable({"t": (0, 1)}, 2)
        tg, members = tracklet_gallery(g, table)
        np.testing.assert_allclose(tg.data, [[0.70711, 0.70711]], atol=1e-5)
        assert members == ((0, 1),)

    def test_singleton_passthrough_is_exact(self):
        g = make_matrix([[1, 0]])
        tg, _ = tracklet_gallery(g, singleton_table(1))
        assert (tg.data == g.data).all()

    def test_two_singletons(self):
        g = make_matrix([[1, 0], [0, 1]], ids=("a", "b"))
        tg, members = tracklet_gallery(g, TrackletTable({"ta": (0,), "tb": (1,)}, 2))
        np.testing.assert_array_equal(tg.data, np.eye(2))
        assert members == ((0,), (1,))
        assert tg.row_ids == ("ta", "tb")


class TestTrackletRerank:
    def test_two_tracklet_hand_case(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[0.8, 0.6], [0.99, 0.14], [0.0, 1.0]], ids=("g0", "g1", "g2"))
        table = TrackletTable({"A": (0, 1), "B": (2,)}, 3)
        ranks = tracklet_rerank(q, g, table)
        # tracklet A mean-similarity beats B; within A, g1 beats g0 directly
        np.testing.assert_array_equal(ranks.indices, [[1, 0, 2]])

    def test_single_tracklet_equals_plain_ranking(self, rng):
        q = random_normalized(rng, 5, 6, "q")
        g = random_normalized(rng, 9, 6, "g")
        table = TrackletTable({"all": tuple(range(9))}, 9)
        plain = rank_topk(cosine_similarity(q, g))
        np.testing.assert_array_equal(tracklet_rerank(q, g, table).indices, plain.indices)

    def test_all_singletons_equals_plain_ranking(self, rng):
        q = random_normalized(rng, 5, 6, "q")
        g = random_normalized(rng, 9, 6, "g")
        plain = rank_topk(cosine_similarity(q, g))
        ranks = tracklet_rerank(q, g, singleton_table(9))
        np.testing.assert_array_equal(ranks.indices, plain.indices)

    def test_output_is_full_permutation(self, rng):
        q = random_normalized(rng, 3, 4, "q")
        g = random_normalized(rng, 8, 4, "g")
        table = TrackletTable({"a": (0, 3, 5), "b": (1, 2), "c": (4, 6, 7)}, 8)
        ranks = tracklet_rerank(q, g, table)
        for row in ranks.indices:
            assert sorted(row) == list(range(8))

    def test_score_matrix_variant_groups_members(self):
        # tracklet A straddles the score gap: mean pulls both rows above B
        scores = np.array([[1.0, 0.1, 0.5]])
        table = TrackletTable({"A": (0, 1), "B": (2,)}, 3)
        ranks = tracklet_rerank_scores(scores, table)
        np.testing.assert_array_equal(ranks.indices, [[0, 1, 2]])


class TestDexExpand:
    def test_orthogonal_neighbor_contributes_nothing(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[0, 1]], ids=("g",))
        out = dex_expand(q, g, singleton_table(1), DexParams(k=1, alpha=2))
        np.testing.assert_allclose(out.data, [[1, 0]], atol=1e-12)

    def test_identical_neighbor_is_fixed_point(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[1, 0]], ids=("g",))
        out = dex_expand(q, g, singleton_table(1), DexParams(k=1, alpha=2))
        np.testing.assert_allclose(out.data, [[1, 0]], atol=1e-12)

    def test_hand_weighted_expansion(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[0.6, 0.8]], ids=("g",))
        out = dex_expand(q, g, singleton_table(1), DexParams(k=1, alpha=2))
        # (1,0) + 0.6^2 (0.6,0.8) = (1.216, 0.288), norm sqrt(1.5616)
        expected = np.array([[1.216, 0.288]]) / np.sqrt(1.5616)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)
        unnorm = dex_expand(q, g, singleton_table(1), DexParams(k=1, alpha=2, renormalize=False))
        np.testing.assert_allclose(unnorm.data, [[1.216, 0.288]], atol=1e-12)

    def test_output_rows_unit_when_renormalized(self, rng):
        q = random_normalized(rng, 6, 8, "q")
        g = random_normalized(rng, 20, 8, "g")
        table = TrackletTable({"a": tuple(range(10)), "b": tuple(range(10, 20))}, 20)
        out = dex_expand(q, g, table, DexParams(k=5))
        np.testing.assert_allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-12)

    def test_singleton_tracklets_match_alpha_qe_exactly(self, rng):
        q = random_normalized(rng, 7, 10, "q")
        g = random_normalized(rng, 25, 10, "g")
        p = DexParams(k=6, alpha=2.0)
        via_tracklets = dex_expand(q, g, singleton_table(25), p)
        via_plain = alpha_qe_expand(q, g, k=6, alpha=2.0)
        assert (via_tracklets.data == via_plain.data).all()

    def test_k_clamps_with_warning(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[1, 0], [0, 1]], ids=("a", "b"))
        with pytest.warns(ClampedParameterWarning):
            dex_expand(q, g, singleton_table(2), DexParams(k=10))

    def test_invalid_params(self):
        with pytest.raises(ValidationError):
            DexParams(k=0)
        with pytest.raises(ValidationError):
            DexParams(alpha=-1)


class TestAqeExpand:
    def test_nearest_is_self_copy(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[1, 0]], ids=("g",))
        np.testing.assert_allclose(aqe_expand(q, g, k=1).data, [[1, 0]], atol=1e-12)

    def test_mean_with_orthogonal(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[0, 1]], ids=("g",))
        np.testing.assert_allclose(
            aqe_expand(q, g, k=1).data, [[0.70711, 0.70711]], atol=1e-5
        )

    def test_hand_two_neighbor_mean(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[0.6, 0.8], [0.8, 0.6]], ids=("a", "b"))
        # mean of (1,0),(0.6,0.8),(0.8,0.6) = (0.8, 7/15), renormalized
        mean = np.array([0.8, 7 / 15.0])
        expected = (mean / np.linalg.norm(mean))[None, :]
        np.testing.assert_allclose(aqe_expand(q, g, k=2).data, expected, atol=1e-12)


class TestAlphaQeExpand:
    def test_alpha_zero_is_unweighted_sum(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[0, 1]], ids=("g",))
        out = alpha_qe_expand(q, g, k=1, alpha=0.0)
        np.testing.assert_allclose(out.data, [[0.70711, 0.70711]], atol=1e-5)

    def test_matches_dex_when_orders_coincide(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[0.6, 0.8]], ids=("g",))
        a = alpha_qe_expand(q, g, k=1, alpha=2.0)
        b = dex_expand(q, g, singleton_table(1), DexParams(k=1, alpha=2.0))
        assert (a.data == b.data).all()

    def test_zero_weighted_neighbor_drops_out(self):
        q = make_matrix([[1, 0]], ids=("q",))
        g = make_matrix([[1, 0], [0, 1]], ids=("a", "b"))
        out = alpha_qe_expand(q, g, k=2, alpha=2.0)
        # weights 1 and 0: expansion is proportional to (2, 0)
        np.testing.assert_allclose(out.data, [[1, 0]], atol=1e-12)
