"""Compare, convolutional aggregation, branch scoring, and the listwise loss.

The aligned and encoded sequences are matched by element-wise product,
summarized by multi-window 1-D convolutions with masked max/mean pooling,
compressed per branch by a small MLP, fused to a scalar logit, and trained
listwise with KL divergence against the normalized relevance labels.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import MASK_FILL, Tensor
from .errors import ContractError, DegenerateMaskError, DimensionError


def compare(h: Tensor, e: Tensor) -> Tensor:
    """Element-wise match of the aligned sequence with the encoded one."""
    if h.data.shape != e.data.shape:
        raise DimensionError(
            f"compare operands must share a shape, got {h.data.shape} and {e.data.shape}"
        )
    return ad.elementwise(h, e, "mul")


def _position_validity(mask: np.ndarray, window: int) -> np.ndarray:
    """A convolution position counts iff its window covers any real slot."""
    return np.lib.stride_tricks.sliding_window_view(mask, window).any(axis=1)


def conv_aggregate(
    y: Tensor,
    mask: np.ndarray,
    conv_weights: dict[int, tuple[Tensor, Tensor]],
    windows: list[int],
) -> Tensor:
    """Aggregate a (len x d) sequence into a 2*len(windows)*F vector.

    Per window size: valid-position convolution, relu, then max and mean
    pooling over positions whose window touches an unmasked slot.  Masked
    rows are zeroed first so padding cannot leak values.  Sequences shorter
    than a window are zero-padded up to it, giving a single position.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DegenerateMaskError("conv aggregation over a fully masked sequence")
    length, d = y.data.shape
    y = ad.mul_const(y, mask.astype(np.float64)[:, None])

    pooled: list[Tensor] = []
    for window in windows:
        x, m = y, mask
        if length < window:
            pad = Tensor(np.zeros((window - length, d)))
            x = ad.concat([y, pad], axis=0)
            m = np.concatenate([mask, np.zeros(window - length, dtype=bool)])
        weight, bias = conv_weights[window]
        conv = ad.activation(ad.conv1d(x, weight, bias, window), "relu")
        valid = _position_validity(m, window)
        fill = ((valid.astype(np.float64) - 1.0) * MASK_FILL)[:, None]
        pooled.append(ad.reduce(ad.add_const(conv, fill), "max", axis=0))
        kept = ad.mul_const(conv, valid.astype(np.float64)[:, None])
        pooled.append(
            ad.mul_const(ad.reduce(kept, "sum", axis=0), 1.0 / int(valid.sum()))
        )
    return ad.concat(pooled, axis=0)


def branch_mlp(
    agg: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor
) -> Tensor:
    """Two relu layers compressing one branch's aggregate vector."""
    hidden = ad.activation(ad.elementwise(ad.matmul(agg, w1), b1, "add"), "relu")
    return ad.activation(ad.elementwise(ad.matmul(hidden, w2), b2, "add"), "relu")


def fuse_branches(h_q: Tensor, h_a: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Concatenate the branch vectors and compress to a single logit (shape (1,))."""
    both = ad.concat([h_q, h_a], axis=0)
    return ad.elementwise(ad.matmul(both, w), b, "add")


def listwise_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """KL divergence from softmax(logits) to the label distribution.

    The target is uniform over positive labels; loss = sum t_i ln(t_i/p_i)
    with 0 ln 0 = 0.  Requires at least one positive label.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if logits.data.ndim != 1 or labels.shape != logits.data.shape:
        raise DimensionError(
            f"listwise loss needs aligned 1-D logits/labels, got "
            f"{logits.data.shape} and {labels.shape}"
        )
    positives = labels.sum()
    if positives <= 0:
        raise ContractError("listwise loss requires at least one positive label")
    target = labels / positives
    probs = ad.softmax_masked(logits, np.ones_like(labels, dtype=bool))
    cross = ad.reduce(ad.mul_const(ad.log(probs), target), "sum")
    entropy = float(np.sum(np.where(target > 0, target * np.log(np.where(target > 0, target, 1.0)), 0.0)))
    return ad.add_const(ad.mul_const(cross, -1.0), entropy)
