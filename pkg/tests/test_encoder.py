"""Gated encoder: scalar oracle, shape/range contracts, dropout behavior."""

import math

import numpy as np
import pytest

from dfgn.autodiff import Tensor
from dfgn.encoder import gated_encode
from dfgn.errors import ConfigError


def rand(shape, seed):
    return np.random.default_rng(seed).uniform(-1, 1, shape)


class TestGatedEncode:
    def test_zero_input_is_annihilated(self):
        w1 = Tensor(rand((3, 3), 0))
        w2 = Tensor(rand((3, 3), 1))
        out = gated_encode(Tensor(np.zeros((4, 3))), w1, w2)
        assert np.array_equal(out.data, np.zeros((4, 3)))

    def test_scalar_oracle(self):
        out = gated_encode(Tensor([[1.0]]), Tensor([[1.0]]), Tensor([[1.0]]))
        expected = (1 / (1 + math.exp(-1))) * math.tanh(1.0)
        assert out.data[0, 0] == pytest.approx(expected, abs=1e-12)
        assert out.data[0, 0] == pytest.approx(0.5568, abs=1e-4)

    def test_outputs_inside_unit_interval(self):
        out = gated_encode(Tensor(rand((6, 4), 2) * 10), Tensor(rand((4, 4), 3)), Tensor(rand((4, 4), 4)))
        assert (np.abs(out.data) < 1).all()

    def test_sequence_length_preserved(self):
        for length in (1, 5, 22):
            out = gated_encode(Tensor(rand((length, 3), 5)), Tensor(rand((3, 3), 6)), Tensor(rand((3, 3), 7)))
            assert out.data.shape == (length, 3)

    def test_inference_is_deterministic_and_dropout_free(self):
        x = Tensor(rand((5, 3), 8))
        w1, w2 = Tensor(rand((3, 3), 9)), Tensor(rand((3, 3), 10))
        a = gated_encode(x, w1, w2, dropout_rate=0.5, training=False)
        b = gated_encode(x, w1, w2, dropout_rate=0.5, training=False)
        assert np.array_equal(a.data, b.data)

    def test_rate_validation(self):
        x = Tensor(np.ones((2, 2)))
        w = Tensor(np.eye(2))
        with pytest.raises(ConfigError):
            gated_encode(x, w, w, dropout_rate=1.0)
        with pytest.raises(ConfigError):
            gated_encode(x, w, w, dropout_rate=-0.1)

    def test_dropout_expectation_matches_clean_output(self):
        # inverted dropout: E[output] == no-dropout output (2% tolerance
        # over 10^4 samples)
        x = Tensor(rand((2, 3), 11))
        w1, w2 = Tensor(rand((3, 3), 12)), Tensor(rand((3, 3), 13))
        clean = gated_encode(x, w1, w2).data
        rng = np.random.default_rng(14)
        total = np.zeros_like(clean)
        n = 10_000
        for _ in range(n):
            total += gated_encode(x, w1, w2, dropout_rate=0.1, training=True, rng=rng).data
        rel = np.abs(total / n - clean) / np.maximum(np.abs(clean), 1e-8)
        assert rel.max() <= 0.02

    def test_training_without_rng_rejected(self):
        x = Tensor(np.ones((2, 2)))
        w = Tensor(np.eye(2))
        with pytest.raises(ConfigError):
            gated_encode(x, w, w, dropout_rate=0.1, training=True)
