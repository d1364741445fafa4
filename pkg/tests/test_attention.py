"""Attention weights and the attended sequence against direct evaluation."""

import numpy as np
import pytest

import mcsm.numcore as nc
from mcsm import attention as att
from mcsm.errors import EmptySupportError, ShapeError
from oracles import attention_ref


def make_params(input_dim=3, attn_dim=3, seed=0, dtype=np.float64):
    store = nc.ParamStore()
    params = att.init_attention_params(store, "attn", input_dim, attn_dim,
                                       np.random.default_rng(seed), dtype)
    return store, params


class TestAttentionWeights:
    def test_identical_rows_give_uniform_weights(self):
        _, params = make_params(seed=1)
        row = np.random.default_rng(2).normal(size=3)
        hidden = np.tile(row, (5, 1))
        out = att.attention_weights(hidden, params).data
        np.testing.assert_allclose(out, np.full(5, 0.2), atol=1e-12)

    def test_single_valid_position_takes_all(self):
        _, params = make_params(seed=3)
        hidden = np.random.default_rng(4).normal(size=(4, 3))
        mask = np.array([False, False, True, False])
        out = att.attention_weights(hidden, params, mask=mask).data
        np.testing.assert_array_equal(out, [0.0, 0.0, 1.0, 0.0])

    def test_matches_straight_line_oracle(self):
        _, params = make_params(seed=5)
        hidden = np.random.default_rng(6).normal(size=(3, 3))
        out = att.attention_weights(hidden, params).data
        ref = attention_ref(hidden, params.w.data, params.v.data)
        np.testing.assert_allclose(out, ref, atol=1e-12)

    def test_all_masked_rejected(self):
        _, params = make_params()
        with pytest.raises(EmptySupportError):
            att.attention_weights(np.ones((3, 3)), params, mask=np.zeros(3, dtype=bool))

    def test_shift_invariance_through_logits(self):
        """Constant added to all unmasked logits leaves weights unchanged.

        Exercised at the softmax boundary: the tanh scoring chain makes the
        logits themselves hard to shift from the outside.
        """
        rng = np.random.default_rng(7)
        logits = rng.normal(size=6) * 3
        mask = np.array([True, True, False, True, True, False])
        base = nc.softmax(nc.constant(logits), mask=mask).data
        shifted = nc.softmax(nc.constant(logits + 42.0), mask=mask).data
        np.testing.assert_allclose(shifted, base, atol=1e-6)

    def test_batch_matches_single(self):
        _, params = make_params(seed=8)
        rng = np.random.default_rng(9)
        seqs = rng.normal(size=(4, 5, 3))
        valid = np.array([5, 3, 4, 1])
        steps = [nc.constant(seqs[:, t, :]) for t in range(5)]
        mask = np.arange(5)[None, :] < valid[:, None]
        batched = att.attention_weights_batch(steps, params, mask=mask).data
        for i in range(4):
            single = att.attention_weights(seqs[i], params, mask=mask[i]).data
            np.testing.assert_allclose(batched[i], single, atol=1e-12)


class TestAttendedSequence:
    def test_one_hot_selects_single_vector(self):
        hidden = np.random.default_rng(10).normal(size=(4, 3))
        weights = nc.constant([0.0, 0.0, 1.0, 0.0])
        out = att.attended_sequence(hidden, weights).data
        np.testing.assert_array_equal(out[2], hidden[2])
        assert np.all(out[[0, 1, 3]] == 0)

    def test_uniform_scales_by_inverse_count(self):
        hidden = np.random.default_rng(11).normal(size=(5, 3))
        out = att.attended_sequence(hidden, nc.constant(np.full(5, 0.2))).data
        np.testing.assert_allclose(out, hidden / 5, atol=1e-12)

    def test_random_case_hand_scaled(self):
        rng = np.random.default_rng(12)
        hidden = rng.normal(size=(3, 4))
        weights = rng.uniform(0.1, 1.0, size=3)
        out = att.attended_sequence(hidden, nc.constant(weights)).data
        np.testing.assert_allclose(out, hidden * weights[:, None], atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            att.attended_sequence(np.ones((3, 2)), nc.constant(np.ones(4)))


class TestAttentionProperties:
    def test_weighted_sum_in_convex_hull(self):
        """Each coordinate of the attended sum is bounded by valid-position extremes."""
        _, params = make_params(seed=13)
        rng = np.random.default_rng(14)
        for _ in range(20):
            hidden = rng.normal(size=(6, 3)) * rng.uniform(0.5, 4)
            mask = rng.uniform(size=6) < 0.75
            if not mask.any():
                mask[0] = True
            weights = att.attention_weights(hidden, params, mask=mask).data
            summed = (hidden * weights[:, None]).sum(axis=0)
            valid_rows = hidden[mask]
            assert np.all(summed >= valid_rows.min(axis=0) - 1e-12)
            assert np.all(summed <= valid_rows.max(axis=0) + 1e-12)

    def test_gradients(self):
        store, params = make_params(seed=15)
        hidden = np.random.default_rng(16).normal(size=(4, 3))
        mask = np.array([True, True, True, False])

        def f():
            weights = att.attention_weights(hidden, params, mask=mask)
            return nc.mean_all(nc.tanh(att.attended_sequence(hidden, weights)))

        report = nc.grad_check(f, store)
        assert report.passed, report.format()

    def test_attended_sum_batch_gradients(self):
        store, params = make_params(seed=17)
        rng = np.random.default_rng(18)
        seqs = rng.normal(size=(3, 4, 3))
        steps = [nc.constant(seqs[:, t, :]) for t in range(4)]

        def f():
            weights = att.attention_weights_batch(steps, params)
            return nc.mean_all(nc.tanh(att.attended_sum_batch(steps, weights)))

        report = nc.grad_check(f, store)
        assert report.passed, report.format()
