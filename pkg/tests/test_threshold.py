"""Dynamic-threshold co-attention: phi truth table, identity equivalence,
sparsification, and gradient routing."""

import numpy as np
import pytest

from dfgn import features as feat
from dfgn import threshold as th
from dfgn.autodiff import Tape, Tensor
from dfgn.errors import DegenerateMaskError, DimensionError


def rand(shape, seed):
    return np.random.default_rng(seed).uniform(-1, 1, shape)


class TestAffinities:
    def test_orthogonal_encodings_zero_matrix(self):
        e_a = Tensor([[1.0, 0.0]])
        e_q = Tensor([[0.0, 1.0]])
        assert np.array_equal(th.second_affinity(e_a, e_q).data, [[0.0]])

    def test_equal_encodings_symmetric(self):
        e = Tensor(rand((4, 3), 0))
        g = th.second_affinity(e, e).data
        assert np.array_equal(g, g.T)

    def test_one_by_one_scalar_product(self):
        g = th.second_affinity(Tensor([[3.0]]), Tensor([[4.0]]))
        assert g.data[0, 0] == 12.0

    def test_identity_weight_reduces_to_plain_affinity(self):
        e_a, e_q = Tensor(rand((3, 4), 1)), Tensor(rand((5, 4), 2))
        g = th.second_affinity(e_a, e_q)
        g_hat = th.threshold_affinity(e_a, Tensor(np.eye(4)), e_q)
        assert np.array_equal(g.data, g_hat.data)

    def test_zero_weight_gives_zero_scores(self):
        e_a, e_q = Tensor(rand((3, 4), 3)), Tensor(rand((5, 4), 4))
        g_hat = th.threshold_affinity(e_a, Tensor(np.zeros((4, 4))), e_q)
        assert np.array_equal(g_hat.data, np.zeros((3, 5)))

    def test_scalar_weight_scales(self):
        e_a, e_q = Tensor(rand((3, 1), 5)), Tensor(rand((4, 1), 6))
        g = th.second_affinity(e_a, e_q)
        g_hat = th.threshold_affinity(e_a, Tensor([[2.0]]), e_q)
        assert np.allclose(g_hat.data, 2 * g.data, atol=1e-15)


class TestPhi:
    def test_truth_table(self):
        assert th.phi(0.3, 0.5) == 0.0
        assert th.phi(0.5, 0.3) == 0.5
        assert th.phi(0.4, 0.4) == 0.4


class TestThresholdedAlign:
    def test_tie_keeps_everything(self):
        g = Tensor(rand((4, 3), 7))
        v = Tensor(rand((4, 2), 8))
        mask = np.ones(4, bool)
        h, diag = th.thresholded_align(g, g, v, mask)
        plain, _ = feat.alignment_pool(g, v, mask)
        assert np.array_equal(h.data, plain.data)
        assert np.array_equal(diag.retained, diag.weights)

    def test_identity_threshold_weight_equals_plain_alignment_bitwise(self):
        e_a, e_q = Tensor(rand((4, 3), 9)), Tensor(rand((5, 3), 10))
        mask = np.ones(4, bool)
        g = th.second_affinity(e_a, e_q)
        g_hat = th.threshold_affinity(e_a, Tensor(np.eye(3)), e_q)
        h, _ = th.thresholded_align(g, g_hat, e_a, mask)
        plain, _ = feat.alignment_pool(g, e_a, mask)
        assert np.array_equal(h.data, plain.data)

    def test_single_unmasked_source_row(self):
        g = Tensor(rand((3, 4), 11))
        v = Tensor(rand((3, 2), 12))
        mask = np.array([False, True, False])
        h, _ = th.thresholded_align(g, g, v, mask)
        assert np.allclose(h.data, np.tile(v.data[1], (4, 1)))

    def test_hand_case(self):
        # weights [0.7, 0.2, 0.1] vs thresholds [0.5, 0.3, 0.2]: only the
        # first survives, output = 0.7 * V_0
        w = np.array([0.7, 0.2, 0.1])
        t = np.array([0.5, 0.3, 0.2])
        g = Tensor(np.log(w)[:, None])
        g_hat = Tensor(np.log(t)[:, None])
        v = Tensor(rand((3, 2), 13))
        h, diag = th.thresholded_align(g, g_hat, v, np.ones(3, bool))
        assert np.allclose(diag.weights[:, 0], w, atol=1e-12)
        assert np.allclose(diag.retained[:, 0], [0.7, 0.0, 0.0], atol=1e-12)
        assert np.allclose(h.data[0], 0.7 * v.data[0], atol=1e-12)

    def test_sparsification_properties(self):
        rng = np.random.default_rng(14)
        g = Tensor(rng.normal(size=(6, 5)))
        g_hat = Tensor(rng.normal(size=(6, 5)))
        v = Tensor(rng.normal(size=(6, 3)))
        mask = np.array([True, True, True, True, False, False])
        _, diag = th.thresholded_align(g, g_hat, v, mask)
        kept = diag.retained
        w = diag.weights
        # each retained value equals its weight exactly or is zero
        assert np.all((kept == w) | (kept == 0.0))
        assert (kept >= 0).all()
        assert (kept.sum(axis=0) <= 1.0 + 1e-12).all()
        assert (kept.max(axis=0) <= w.max(axis=0) + 0).all()
        assert np.array_equal(kept[~mask], np.zeros((2, 5)))

    def test_renormalized_variant_sums_to_one(self):
        rng = np.random.default_rng(15)
        g = Tensor(rng.normal(size=(5, 4)))
        g_hat = Tensor(rng.normal(size=(5, 4)))
        v = Tensor(rng.normal(size=(5, 2)))
        _, diag = th.thresholded_align(g, g_hat, v, np.ones(5, bool), renormalize=True)
        sums = diag.retained.sum(axis=0)
        assert np.allclose(sums[sums > 0], 1.0, atol=1e-9)

    def test_gradient_routing_defaults_to_weight_side_only(self):
        rng = np.random.default_rng(16)
        g_data = rng.normal(size=(3, 2))
        v = Tensor(rng.normal(size=(3, 2)))
        mask = np.ones(3, bool)
        g = Tensor(g_data, requires_grad=True)
        g_hat = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        with Tape() as tape:
            h, _ = th.thresholded_align(g, g_hat, v, mask)
            from dfgn import autodiff as ad
            tape.backward(ad.reduce(h, "sum"))
        assert np.abs(g.grad).sum() > 0
        assert np.array_equal(g_hat.grad, np.zeros((3, 2)))

    def test_straight_through_routes_threshold_gradient(self):
        rng = np.random.default_rng(17)
        v = Tensor(rng.normal(size=(3, 2)))
        mask = np.ones(3, bool)
        g = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        g_hat = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        with Tape() as tape:
            h, _ = th.thresholded_align(g, g_hat, v, mask, straight_through=True)
            from dfgn import autodiff as ad
            tape.backward(ad.reduce(h, "sum"))
        assert np.abs(g_hat.grad).sum() > 0

    def test_degenerate_mask(self):
        g = Tensor(np.ones((2, 2)))
        v = Tensor(np.ones((2, 2)))
        with pytest.raises(DegenerateMaskError):
            th.thresholded_align(g, g, v, np.array([False, False]))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            th.thresholded_align(
                Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))),
                Tensor(np.ones((2, 2))), np.ones(2, bool),
            )
