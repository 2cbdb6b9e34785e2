"""Compare/aggregate head and the listwise KL loss."""

import math

import numpy as np
import pytest

from dfgn import autodiff as ad
from dfgn import head
from dfgn.autodiff import Tape, Tensor
from dfgn.errors import ContractError, DegenerateMaskError, DimensionError


def rand(shape, seed):
    return np.random.default_rng(seed).uniform(-1, 1, shape)


def make_conv_params(windows, d, filters, seed=0):
    rng = np.random.default_rng(seed)
    return {
        w: (Tensor(rng.uniform(-1, 1, (w * d, filters))), Tensor(np.zeros(filters)))
        for w in windows
    }


class TestCompare:
    def test_ones_is_identity(self):
        e = Tensor(rand((3, 2), 0))
        out = head.compare(Tensor(np.ones((3, 2))), e)
        assert np.array_equal(out.data, e.data)

    def test_zero_row_zeroes_output(self):
        h = Tensor([[0.0, 0.0], [1.0, 1.0]])
        e = Tensor(rand((2, 2), 1))
        out = head.compare(h, e)
        assert np.array_equal(out.data[0], [0.0, 0.0])

    def test_hand_product(self):
        out = head.compare(Tensor([[1.0, 2.0]]), Tensor([[3.0, 4.0]]))
        assert np.array_equal(out.data, [[3.0, 8.0]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            head.compare(Tensor(np.ones((2, 2))), Tensor(np.ones((3, 2))))


class TestConvAggregate:
    def test_output_length_contract(self):
        windows = [1, 2, 3, 4, 5]
        filters = 3
        params = make_conv_params(windows, 4, filters)
        for length in (1, 2, 7, 20):
            y = Tensor(rand((length, 4), length))
            out = head.conv_aggregate(y, np.ones(length, bool), params, windows)
            assert out.data.shape == (2 * 5 * filters,)

    def test_single_window_identity_filter_oracle(self):
        # one filter picking out dim 0, window 1: conv = [2, -1],
        # relu = [2, 0], masked max = 2, masked mean = 1
        params = {1: (Tensor([[1.0]]), Tensor([0.0]))}
        y = Tensor([[2.0], [-1.0]])
        out = head.conv_aggregate(y, np.ones(2, bool), params, [1])
        assert np.allclose(out.data, [2.0, 1.0])

    def test_zero_input_with_zero_bias(self):
        windows = [1, 2]
        params = make_conv_params(windows, 3, 2)
        y = Tensor(np.zeros((4, 3)))
        out = head.conv_aggregate(y, np.ones(4, bool), params, windows)
        assert np.array_equal(out.data, np.zeros(2 * 2 * 2))

    def test_masked_tail_permutation_invariance(self):
        windows = [1, 2, 3]
        params = make_conv_params(windows, 3, 2, seed=5)
        rng = np.random.default_rng(6)
        body = rng.uniform(-1, 1, (3, 3))
        tail_a = rng.uniform(-1, 1, (3, 3))
        tail_b = tail_a[[2, 0, 1]]
        mask = np.array([True, True, True, False, False, False])
        out_a = head.conv_aggregate(Tensor(np.vstack([body, tail_a])), mask, params, windows)
        out_b = head.conv_aggregate(Tensor(np.vstack([body, tail_b])), mask, params, windows)
        assert np.array_equal(out_a.data, out_b.data)

    def test_window_longer_than_sequence(self):
        params = make_conv_params([4], 2, 1, seed=7)
        y = Tensor(rand((2, 2), 8))
        out = head.conv_aggregate(y, np.ones(2, bool), params, [4])
        assert out.data.shape == (2,)

    def test_degenerate_mask(self):
        params = make_conv_params([1], 2, 1)
        with pytest.raises(DegenerateMaskError):
            head.conv_aggregate(Tensor(np.ones((2, 2))), np.zeros(2, bool), params, [1])

    def test_gradient(self):
        windows = [1, 2]
        params = make_conv_params(windows, 3, 2, seed=9)
        mask = np.array([True, True, True, False])

        def f(y):
            return ad.reduce(head.conv_aggregate(y, mask, params, windows), "sum")

        assert ad.finite_diff_check(f, Tensor(rand((4, 3), 10))) <= 1e-4


class TestScoring:
    def test_zero_weights_give_zero_logit(self):
        agg_q, agg_a = Tensor(rand(6, 0)), Tensor(rand(6, 1))
        zeros = lambda *shape: Tensor(np.zeros(shape))
        bq = head.branch_mlp(agg_q, zeros(6, 4), zeros(4), zeros(4, 4), zeros(4))
        ba = head.branch_mlp(agg_a, zeros(6, 4), zeros(4), zeros(4, 4), zeros(4))
        logit = head.fuse_branches(bq, ba, zeros(8, 1), zeros(1))
        assert logit.data.shape == (1,)
        assert logit.item() == 0.0

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        agg_q, agg_a = Tensor(rng.normal(size=6)), Tensor(rng.normal(size=6))
        w1, b1 = Tensor(rng.normal(size=(6, 4))), Tensor(rng.normal(size=4))
        w2, b2 = Tensor(rng.normal(size=(4, 4))), Tensor(rng.normal(size=4))
        fw, fb = Tensor(rng.normal(size=(8, 1))), Tensor(rng.normal(size=1))

        def run():
            bq = head.branch_mlp(agg_q, w1, b1, w2, b2)
            ba = head.branch_mlp(agg_a, w1, b1, w2, b2)
            return head.fuse_branches(bq, ba, fw, fb).item()

        assert run() == run()

    def test_hand_computed_scalar_chain(self):
        # 1-dim everything: agg=2 -> relu(2*1+0)=2 -> relu(2*0.5+0)=1 per
        # branch; concat [1, 1] @ [1, -0.25] + 0.5 = 1.25
        one = Tensor([2.0])
        w1, b1 = Tensor([[1.0]]), Tensor([0.0])
        w2, b2 = Tensor([[0.5]]), Tensor([0.0])
        bq = head.branch_mlp(one, w1, b1, w2, b2)
        ba = head.branch_mlp(one, w1, b1, w2, b2)
        logit = head.fuse_branches(bq, ba, Tensor([[1.0], [-0.25]]), Tensor([0.5]))
        assert logit.item() == pytest.approx(1.25, abs=1e-12)


class TestListwiseLoss:
    def test_uniform_logits_single_positive_of_two(self):
        loss = head.listwise_loss(Tensor([0.0, 0.0]), np.array([1, 0]))
        assert loss.item() == pytest.approx(math.log(2), abs=1e-12)

    def test_zero_when_prediction_matches_target(self):
        # logits chosen so softmax = [2/3, 1/3] = target of labels [2?]..
        # use equal logits with all-positive labels: p = t = uniform
        loss = head.listwise_loss(Tensor([1.0, 1.0, 1.0]), np.array([1, 1, 1]))
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = rng.integers(2, 8)
            logits = Tensor(rng.normal(size=n))
            labels = np.zeros(n)
            labels[rng.integers(0, n)] = 1
            if rng.random() < 0.5:
                labels[rng.integers(0, n)] = 1
            assert head.listwise_loss(logits, labels).item() >= -1e-15

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=5)
        labels = np.array([0, 1, 0, 1, 0])
        a = head.listwise_loss(Tensor(logits), labels).item()
        b = head.listwise_loss(Tensor(logits + 123.456), labels).item()
        assert a == pytest.approx(b, abs=1e-10)

    def test_gradient_is_p_minus_t(self):
        rng = np.random.default_rng(5)
        logits_data = rng.normal(size=6)
        labels = np.array([1, 0, 0, 1, 0, 0], dtype=float)
        logits = Tensor(logits_data, requires_grad=True)
        with Tape() as tape:
            tape.backward(head.listwise_loss(logits, labels))
        p = np.exp(logits_data) / np.exp(logits_data).sum()
        t = labels / labels.sum()
        assert np.allclose(logits.grad, p - t, atol=1e-12)

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(6)
        labels = np.array([0, 1, 1, 0], dtype=float)
        f = lambda x: head.listwise_loss(x, labels)
        assert ad.finite_diff_check(f, Tensor(rng.normal(size=4))) <= 1e-6

    def test_requires_a_positive(self):
        with pytest.raises(ContractError):
            head.listwise_loss(Tensor([0.0, 1.0]), np.array([0, 0]))

    def test_rejects_mismatched_shapes(self):
        with pytest.raises(DimensionError):
            head.listwise_loss(Tensor([0.0, 1.0]), np.array([1, 0, 0]))
