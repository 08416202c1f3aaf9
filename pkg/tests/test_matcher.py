from __future__ import annotations

import numpy as np
import pytest

from ipseg import (
    FeatureMap,
    GeometryError,
    ImageGeometry,
    MatchParams,
    ParamError,
    PromptEmbedding,
    SimilarityMap,
    SourceTag,
    cluster_points,
    cosine_similarity_map,
    generate_prompts,
    grid_to_pixel,
    topk_coords,
)
from ipseg.matcher import _lloyd

from cluster_oracles import partition_optima, sse_given_centers, topk_oracle
from conftest import make_map


def cosine_oracle(e: np.ndarray, data: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    h, w, _ = data.shape
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            v = data[r, c].astype(np.float64)
            dot = float(np.dot(e, v))
            out[r, c] = dot / (max(np.linalg.norm(e), eps) * max(np.linalg.norm(v), eps))
    return out


class TestCosineSimilarity:
    def test_self_similarity_is_one(self, rng):
        fm = make_map(rng, 3, 3, 4)
        emb = PromptEmbedding(fm.data[1, 2].astype(np.float64), fm.source_tag)
        sim = cosine_similarity_map(emb, fm)
        assert sim.scores[1, 2] == pytest.approx(1.0, abs=1e-12)

    def test_antipodal_is_minus_one(self, rng):
        fm = make_map(rng, 2, 2, 3)
        emb = PromptEmbedding(-fm.data[0, 0].astype(np.float64), fm.source_tag)
        sim = cosine_similarity_map(emb, fm)
        assert sim.scores[0, 0] == pytest.approx(-1.0, abs=1e-12)

    def test_matches_naive_loop(self, rng):
        for _ in range(10):
            fm = make_map(rng, int(rng.integers(1, 6)), int(rng.integers(1, 6)), 5)
            emb = PromptEmbedding(rng.standard_normal(5), fm.source_tag)
            sim = cosine_similarity_map(emb, fm)
            assert np.allclose(sim.scores, cosine_oracle(emb.values, fm.data), atol=1e-6)

    def test_zero_vectors_score_zero(self):
        fm = FeatureMap(np.zeros((2, 2, 3), dtype=np.float32), SourceTag.DINO, ImageGeometry(4, 4))
        emb = PromptEmbedding(np.ones(3), SourceTag.DINO)
        assert np.array_equal(cosine_similarity_map(emb, fm).scores, np.zeros((2, 2)))

    def test_channel_mismatch_rejected(self, rng):
        with pytest.raises(GeometryError):
            cosine_similarity_map(PromptEmbedding(np.ones(3), SourceTag.DINO), make_map(rng, 2, 2, 4))


class TestTopK:
    def test_k_equals_grid_returns_full_sort(self, rng):
        sim = SimilarityMap(rng.uniform(-1, 1, size=(4, 5)))
        got = topk_coords(sim, 20, "most_similar")
        assert got == topk_oracle(sim.scores, 20, largest=True)
        scores = [p[2] for p in got]
        assert scores == sorted(scores, reverse=True)

    def test_constant_map_breaks_ties_by_flat_index(self):
        sim = SimilarityMap(np.full((3, 3), 0.5))
        got = topk_coords(sim, 3, "most_similar")
        assert [(r, c) for r, c, _ in got] == [(0, 0), (0, 1), (0, 2)]
        got_least = topk_coords(sim, 3, "least_similar")
        assert [(r, c) for r, c, _ in got_least] == [(0, 0), (0, 1), (0, 2)]

    def test_random_8x8_k32_matches_sort_oracle(self, rng):
        for _ in range(20):
            sim = SimilarityMap(rng.uniform(-1, 1, size=(8, 8)))
            for polarity, largest in (("most_similar", True), ("least_similar", False)):
                got = topk_coords(sim, 32, polarity)
                assert got == topk_oracle(sim.scores, 32, largest)

    def test_duplicate_values_match_oracle(self, rng):
        values = rng.choice([-0.5, 0.0, 0.5], size=(6, 6))
        sim = SimilarityMap(values)
        for polarity, largest in (("most_similar", True), ("least_similar", False)):
            assert topk_coords(sim, 10, polarity) == topk_oracle(values, 10, largest)

    def test_k_out_of_range_rejected(self, rng):
        sim = SimilarityMap(rng.uniform(-1, 1, size=(3, 3)))
        with pytest.raises(ParamError):
            topk_coords(sim, 10, "most_similar")
        with pytest.raises(ParamError):
            topk_coords(sim, 0, "most_similar")


class TestClusterPoints:
    def test_c_equals_n_returns_the_points(self):
        points = [(0, 0, 1.0), (3, 1, 0.9), (5, 5, 0.8), (7, 2, 0.7)]
        got = cluster_points(points, 4)
        assert sorted(got) == sorted(points)

    def test_two_separated_groups(self, rng):
        # optimal 2-partition of well-separated groups is the groups themselves
        left = [(int(r), int(c), 1.0 - 0.01 * i)
                for i, (r, c) in enumerate(rng.integers(0, 4, size=(16, 2)))]
        right = [(int(r) + 20, int(c) + 20, 0.5 - 0.01 * i)
                 for i, (r, c) in enumerate(rng.integers(0, 4, size=(16, 2)))]
        points = left + right
        got = cluster_points(points, 2)
        regions = {(r < 10, c < 10) for r, c, _ in got}
        assert regions == {(True, True), (False, False)}

        coords = np.array([(p[0], p[1]) for p in points], dtype=np.float64)
        group_partition_sse = sum(
            float(((np.array([(p[0], p[1]) for p in grp]) -
                    np.array([(p[0], p[1]) for p in grp]).mean(axis=0)) ** 2).sum())
            for grp in (left, right)
        )
        unsnapped = cluster_points(points, 2, MatchParams(k=32, c=2, snap_to_member=False))
        centers = np.array([(p[0], p[1]) for p in unsnapped])
        assert sse_given_centers(coords, centers) == pytest.approx(group_partition_sse, rel=1e-9)

    def test_collinear_points_match_exhaustive_medoid_optimum(self):
        points = [(0, 0, 0.9), (0, 1, 0.8), (0, 2, 0.7), (0, 3, 0.6)]
        got = cluster_points(points, 2)
        for r, c, _ in got:
            assert (r, c) in {(p[0], p[1]) for p in points}  # snapped onto members
        coords = np.array([(p[0], p[1]) for p in points], dtype=np.float64)
        centers = np.array([(p[0], p[1]) for p in got], dtype=np.float64)
        _, medoid_opt = partition_optima(coords, 2)
        assert sse_given_centers(coords, centers) == pytest.approx(medoid_opt, rel=1e-9)

    def test_too_few_points_rejected(self):
        with pytest.raises(ParamError):
            cluster_points([(0, 0, 1.0)], 2)

    def test_lloyd_sse_non_increasing(self, rng):
        for _ in range(25):
            flat = rng.choice(16 * 16, size=32, replace=False)
            coords = np.stack(np.divmod(flat, 16), axis=1).astype(np.float64)
            scores = rng.standard_normal(32)
            _, _, history = _lloyd(coords, scores, 4, max_iters=50, seed_on="max_score")
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_snap_false_reports_mean_scores(self):
        points = [(0, 0, 1.0), (0, 2, 0.0)]
        got = cluster_points(points, 1, MatchParams(k=2, c=1, snap_to_member=False))
        assert got == [(0.0, 1.0, 0.5)]

    def test_deterministic_across_runs(self, rng):
        points = [
            (int(r), int(c), float(s))
            for (r, c), s in zip(rng.integers(0, 20, size=(32, 2)), rng.standard_normal(32))
        ]
        assert cluster_points(points, 4) == cluster_points(list(points), 4)


class TestGridToPixel:
    def test_unit_stride_grid_is_identity(self):
        geo = ImageGeometry(6, 8)
        pts = grid_to_pixel([(2, 3, 0.5)], geo, 6, 8)
        assert pts == [(3, 2, 0.5)]

    def test_patch_center_formula(self):
        geo = ImageGeometry(140, 140)
        pts = grid_to_pixel([(0, 0, 1.0)], geo, 14, 14)
        assert (pts[0].x, pts[0].y) == (5, 5)

    def test_full_grid_enumeration_distinct_inbounds_monotone(self):
        geo = ImageGeometry(224, 224)
        cells = [(r, c, 0.0) for r in range(14) for c in range(14)]
        pts = grid_to_pixel(cells, geo, 14, 14)
        assert len({(p.x, p.y) for p in pts}) == 196
        assert all(0 <= p.x < 224 and 0 <= p.y < 224 for p in pts)
        ys = [p.y for p in pts[:: 14]]
        xs = [p.x for p in pts[:14]]
        assert ys == sorted(ys) and len(set(ys)) == 14
        assert xs == sorted(xs) and len(set(xs)) == 14

    def test_fractional_centers_floor(self):
        geo = ImageGeometry(100, 100)
        pts = grid_to_pixel([(1.5, 2.25, 0.0)], geo, 10, 10)
        assert (pts[0].x, pts[0].y) == (27, 20)

    def test_out_of_grid_rejected(self):
        with pytest.raises(ParamError):
            grid_to_pixel([(5, 0, 0.0)], ImageGeometry(10, 10), 5, 5)


def planted_map(rng, grid=14, channels=8, region=(3, 3, 8, 8)):
    """Region cells hold the embedding direction; background is orthogonal noise."""
    e = rng.standard_normal(channels)
    e /= np.linalg.norm(e)
    data = rng.standard_normal((grid, grid, channels))
    data -= np.outer(data.reshape(-1, channels) @ e, e).reshape(grid, grid, channels)
    r0, c0, r1, c1 = region
    data[r0:r1, c0:c1] = e
    fm = FeatureMap(data.astype(np.float32), SourceTag.FUSED, ImageGeometry(grid * 8, grid * 8))
    return fm, PromptEmbedding(e, SourceTag.FUSED)


class TestGeneratePrompts:
    def test_planted_region_attracts_all_positives(self, rng):
        fm, emb = planted_map(rng)
        pset = generate_prompts(fm, emb, MatchParams(k=25, c=4))
        for p in pset.positives:
            # region rows/cols 3..7 -> pixel range [3*8, 8*8)
            assert 24 <= p.x < 64 and 24 <= p.y < 64

    def test_orthogonal_embedding_degenerates_deterministically(self):
        data = np.zeros((4, 4, 2), dtype=np.float32)
        data[:, :, 0] = 1.0
        fm = FeatureMap(data, SourceTag.FUSED, ImageGeometry(8, 8))
        emb = PromptEmbedding(np.array([0.0, 1.0]), SourceTag.FUSED)
        pset = generate_prompts(fm, emb, MatchParams(k=8, c=2))
        pset2 = generate_prompts(fm, emb, MatchParams(k=8, c=2))
        assert len(pset.positives) == len(pset.negatives) == 2
        assert pset == pset2

    def test_default_operating_point_counts(self, rng):
        fm = make_map(rng, 14, 14, 6, tag=SourceTag.FUSED)
        emb = PromptEmbedding(rng.standard_normal(6), SourceTag.FUSED)
        pset = generate_prompts(fm, emb)  # defaults K=32, c=4
        assert len(pset.positives) == 4 and len(pset.negatives) == 4
        assert pset.k == 32 and pset.c == 4

    def test_scale_invariance_of_selection(self, rng):
        for _ in range(10):
            fm = make_map(rng, 9, 9, 5, tag=SourceTag.FUSED)
            e = rng.standard_normal(5)
            base = None
            for alpha in (1e-3, 1.0, 1e3):
                emb = PromptEmbedding(alpha * e, SourceTag.FUSED)
                sim = cosine_similarity_map(emb, fm)
                top = {(r, c) for r, c, _ in topk_coords(sim, 32, "most_similar")}
                bottom = {(r, c) for r, c, _ in topk_coords(sim, 32, "least_similar")}
                if base is None:
                    base = (top, bottom)
                else:
                    assert (top, bottom) == base

    def test_positive_negative_disjoint_and_ordered(self, rng):
        fm = make_map(rng, 10, 10, 4, tag=SourceTag.FUSED)  # 2K = 64 <= 100
        emb = PromptEmbedding(rng.standard_normal(4), SourceTag.FUSED)
        sim = cosine_similarity_map(emb, fm)
        top = {(r, c) for r, c, _ in topk_coords(sim, 32, "most_similar")}
        bottom = {(r, c) for r, c, _ in topk_coords(sim, 32, "least_similar")}
        assert not top & bottom
        pset = generate_prompts(fm, emb, MatchParams(k=32, c=4))
        assert min(p.score for p in pset.positives) >= max(p.score for p in pset.negatives)

    def test_prompts_inside_image_bounds(self, rng):
        for _ in range(10):
            fm = make_map(rng, 7, 9, 3, tag=SourceTag.FUSED, image_scale=13)
            emb = PromptEmbedding(rng.standard_normal(3), SourceTag.FUSED)
            pset = generate_prompts(fm, emb, MatchParams(k=12, c=3))
            for p in pset.positives + pset.negatives:
                assert 0 <= p.x < fm.geometry.image_width
                assert 0 <= p.y < fm.geometry.image_height

    def test_bit_identical_across_runs(self, rng):
        fm = make_map(rng, 12, 12, 8, tag=SourceTag.FUSED)
        emb = PromptEmbedding(rng.standard_normal(8), SourceTag.FUSED)
        a = generate_prompts(fm, emb, MatchParams())
        b = generate_prompts(fm, emb, MatchParams())
        assert a == b
