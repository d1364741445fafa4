"""Normalisation, fusion and MAP evaluation against scalar re-computation."""

import logging

import numpy as np
import pytest

from mcsm import fusion_eval as fe
from mcsm.errors import ContractError, ShapeError
from mcsm.semantic_space import SimilarityMatrix
from oracles import adaptive_fuse_ref, ap_ref, late_fuse_ref, map_ref, minmax_ref


class TestMinMaxNormalize:
    def test_endpoint_mapping(self):
        out = fe.minmax_normalize(np.array([[1.0, 3.0], [2.0, 4.0]]))
        np.testing.assert_allclose(out, [[0.0, 2 / 3], [1 / 3, 1.0]], atol=1e-15)

    def test_constant_matrix_maps_to_half(self):
        out = fe.minmax_normalize(np.full((3, 4), 7.25))
        np.testing.assert_array_equal(out, np.full((3, 4), 0.5))

    def test_affine_invariance(self):
        rng = np.random.default_rng(0)
        s = rng.normal(size=(5, 6))
        base = fe.minmax_normalize(s)
        np.testing.assert_allclose(fe.minmax_normalize(3.7 * s + 11.0), base, atol=1e-12)

    def test_range_and_extremes(self):
        rng = np.random.default_rng(1)
        out = fe.minmax_normalize(rng.normal(size=(4, 4)))
        assert out.min() == 0.0 and out.max() == 1.0
        assert np.all((out >= 0) & (out <= 1))

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(2)
        s = rng.normal(size=(3, 5))
        np.testing.assert_allclose(fe.minmax_normalize(s), np.array(minmax_ref(s)), atol=1e-15)


class TestAdaptiveFuse:
    def test_constant_matrices_half_weighted(self):
        sim_i = np.full((2, 2), 4.0)
        sim_t = np.full((2, 2), -2.0)
        out = fe.adaptive_fuse(sim_i, sim_t)
        np.testing.assert_array_equal(out.values, np.full((2, 2), 0.5 * 4.0 + 0.5 * -2.0))
        assert out.tag == "fused"

    def test_hand_evaluated_case(self):
        """Complementary 0/1 matrices weight each other to zero everywhere."""
        sim_i = np.array([[0.0, 1.0], [1.0, 0.0]])
        sim_t = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = fe.adaptive_fuse(sim_i, sim_t)
        np.testing.assert_array_equal(out.values, np.zeros((2, 2)))

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = rng.normal(size=(4, 4)) * rng.uniform(0.5, 5)
            b = rng.normal(size=(4, 4)) * rng.uniform(0.5, 5)
            np.testing.assert_allclose(fe.adaptive_fuse(a, b).values,
                                       np.array(adaptive_fuse_ref(a, b)), atol=1e-12)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        np.testing.assert_allclose(fe.adaptive_fuse(a, b).values,
                                   fe.adaptive_fuse(b, a).values, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            fe.adaptive_fuse(np.ones((2, 2)), np.ones((2, 3)))


class TestLateFuse:
    def test_equal_inputs_identity(self):
        s = np.random.default_rng(5).normal(size=(3, 3))
        np.testing.assert_allclose(fe.late_fuse(s, s).values, s, atol=1e-15)

    def test_opposite_inputs_cancel(self):
        s = np.random.default_rng(6).normal(size=(3, 3))
        np.testing.assert_array_equal(fe.late_fuse(s, -s).values, np.zeros((3, 3)))

    def test_matches_scalar_reference_and_commutes(self):
        rng = np.random.default_rng(7)
        a, b = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
        np.testing.assert_allclose(fe.late_fuse(a, b).values,
                                   np.array(late_fuse_ref(a, b)), atol=1e-15)
        np.testing.assert_array_equal(fe.late_fuse(a, b).values, fe.late_fuse(b, a).values)

    def test_tag(self):
        assert fe.late_fuse(np.ones((1, 1)), np.ones((1, 1))).tag == "late-fused"


class TestAveragePrecision:
    def test_all_relevant_first(self):
        assert fe.average_precision([1, 1, 0, 0], 2) == 1.0

    def test_interleaved_hand_value(self):
        """[1,0,1,0] with R=2: (1/2)(1/1 + 2/3) = 5/6."""
        assert fe.average_precision([1, 0, 1, 0], 2) == pytest.approx(5 / 6, abs=1e-15)

    def test_no_hits_is_zero(self):
        assert fe.average_precision([0, 0, 0, 0], 2) == 0.0

    def test_zero_relevant_rejected(self):
        with pytest.raises(ContractError):
            fe.average_precision([0, 1], 0)

    def test_matches_loop_reference(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            rel = rng.uniform(size=12) < 0.4
            if not rel.any():
                rel[3] = True
            r = int(rel.sum())
            assert fe.average_precision(rel, r) == pytest.approx(ap_ref(list(rel), r), abs=1e-14)


class TestRetrievalEval:
    def test_perfect_matrix_gives_map_one(self):
        labels = np.arange(5)
        metrics = fe.retrieval_eval(np.eye(5), labels, labels, "image2text")
        assert metrics.map_score == 1.0
        assert list(metrics.ap_values) == [1.0] * 5

    def test_tied_scores_follow_id_order(self):
        """All-equal scores: ranking is the candidate id order, matching brute force."""
        labels = np.array([0, 0, 1, 1])
        sim = np.zeros((4, 4))
        metrics = fe.retrieval_eval(sim, labels, labels, "image2text")
        expected_map, expected = map_ref(sim, labels, labels)
        assert metrics.map_score == pytest.approx(expected_map, abs=1e-12)
        np.testing.assert_allclose(metrics.ap_values, [ap for _, ap in expected], atol=1e-12)

    def test_matches_bruteforce_on_random_matrices(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            sim = rng.normal(size=(8, 8))
            labels_i = rng.integers(0, 3, size=8)
            labels_t = rng.integers(0, 3, size=8)
            for direction, scores, ql, cl in (
                    ("image2text", sim, labels_i, labels_t),
                    ("text2image", sim.T, labels_t, labels_i)):
                if not any((cl == q).any() for q in ql):
                    continue
                try:
                    metrics = fe.retrieval_eval(sim, labels_i, labels_t, direction)
                except ContractError:
                    continue
                expected_map, _ = map_ref(scores, ql, cl)
                assert metrics.map_score == pytest.approx(expected_map, abs=1e-12)

    def test_monotone_transform_leaves_map_unchanged(self):
        rng = np.random.default_rng(10)
        sim = rng.normal(size=(10, 10))
        labels = rng.integers(0, 4, size=10)
        base_fwd = fe.retrieval_eval(sim, labels, labels, "image2text")
        base_bwd = fe.retrieval_eval(sim, labels, labels, "text2image")
        for a, b in ((2.0, 0.0), (0.5, -3.0), (17.0, 42.0)):
            scaled = fe.retrieval_eval(a * sim + b, labels, labels, "image2text")
            assert scaled.map_score == base_fwd.map_score
            np.testing.assert_array_equal(scaled.ap_values, base_fwd.ap_values)
            scaled_b = fe.retrieval_eval(a * sim + b, labels, labels, "text2image")
            assert scaled_b.map_score == base_bwd.map_score

    def test_query_without_relevant_candidates_excluded(self, caplog):
        labels_i = np.array([0, 1])
        labels_t = np.array([0, 0])
        with caplog.at_level(logging.WARNING):
            metrics = fe.retrieval_eval(np.ones((2, 2)), labels_i, labels_t, "image2text")
        assert metrics.excluded == [1]
        assert len(metrics.ap_values) == 1
        assert "excluded" in caplog.text

    def test_map_bounds_and_perfect_ranking(self):
        rng = np.random.default_rng(11)
        labels = np.array([0, 0, 1, 1, 2, 2])
        sim = rng.normal(size=(6, 6))
        metrics = fe.retrieval_eval(sim, labels, labels, "image2text")
        assert 0.0 <= metrics.map_score <= 1.0
        # force every relevant candidate above every irrelevant one
        perfect = np.where(labels[:, None] == labels[None, :], 10.0, 0.0) + 0.01 * sim
        assert fe.retrieval_eval(perfect, labels, labels, "image2text").map_score == 1.0

    def test_csv_roundtrip(self, tmp_path):
        labels = np.arange(3)
        metrics = fe.retrieval_eval(np.eye(3), labels, labels, "image2text")
        out = tmp_path / "metrics.csv"
        metrics.write_csv(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "query_id,ap"
        assert lines[-1].startswith("summary,image2text")
