"""Gated nonlinear sequence encoder.

Each position x maps to sigmoid(x W_gate) * tanh(x W_out); the sequence
length never changes.  Training applies inverted dropout so inference needs
no rescaling and is deterministic.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError


def gated_encode(
    x: Tensor,
    w_gate: Tensor,
    w_out: Tensor,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Encode a (len x d) sequence with a multiplicative gate."""
    if not 0.0 <= dropout_rate < 1.0:
        raise ConfigError(f"encoder dropout rate must lie in [0, 1), got {dropout_rate}")
    gate = ad.activation(ad.matmul(x, w_gate), "sigmoid")
    value = ad.activation(ad.matmul(x, w_out), "tanh")
    encoded = ad.elementwise(gate, value, "mul")
    if training and dropout_rate > 0.0:
        if rng is None:
            raise ConfigError("training-time dropout requires an rng")
        encoded = ad.dropout(encoded, dropout_rate, rng)
    return encoded
