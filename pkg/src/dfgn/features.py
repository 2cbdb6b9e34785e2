"""Sentence-level feature generation via attention pooling.

Ten d-vectors are distilled per sentence and appended to its word sequence:
extractive max/mean pooling over a parametric self projection, over the
sentence's own affinity matrix (intra), and over the cross-sentence
affinity matrix (co), plus max/mean pooling of the intra and co alignment
sequences.  Padded positions never receive attention weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import MASK_FILL, Tensor
from .errors import DegenerateMaskError

# Concatenation order of the appended feature slots.  Ablations drop whole
# families; survivors keep this relative order.
FEATURE_ORDER = (
    "m_self", "m_intra", "m_co",
    "n_self", "n_intra", "n_co",
    "k_intra", "k_co",
    "l_intra", "l_co",
)

FAMILY_OF = {
    "m_self": "self", "n_self": "self",
    "m_intra": "intra", "n_intra": "intra",
    "k_intra": "intra", "l_intra": "intra",
    "m_co": "co", "n_co": "co", "k_co": "co", "l_co": "co",
}


@dataclass
class AttentionFeatureSet:
    """Feature vectors for one sentence plus the attention weights that
    produced them (weights are detached copies, kept for inspection)."""

    vectors: dict[str, Tensor] = field(default_factory=dict)
    extractive_weights: dict[str, np.ndarray] = field(default_factory=dict)

    def ordered(self) -> list[Tensor]:
        return [self.vectors[name] for name in FEATURE_ORDER if name in self.vectors]

    def names(self) -> list[str]:
        return [name for name in FEATURE_ORDER if name in self.vectors]


def self_projection(x: Tensor, w: Tensor) -> Tensor:
    """Per-word nonlinear projection tanh(X W) of one sentence."""
    return ad.activation(ad.matmul(x, w), "tanh")


def affinity(x: Tensor, y: Tensor) -> Tensor:
    """Word-by-word affinity X Y^T; intra uses y = x, co uses the other side."""
    return ad.matmul(x, ad.transpose(y))


def _masked_scores(m: Tensor, reducer: str, other_mask: np.ndarray | None) -> Tensor:
    """Per-row score of ``m`` under ``reducer`` over columns.

    ``other_mask`` restricts the reduction to unmasked columns; None means
    the column axis is a hidden dimension with no padding.
    """
    if other_mask is None:
        return ad.reduce(m, reducer, axis=1)
    other_mask = np.asarray(other_mask, dtype=bool)
    count = int(other_mask.sum())
    if count == 0:
        raise DegenerateMaskError("score reduction over a fully masked sentence")
    if reducer == "max":
        fill = (other_mask.astype(np.float64) - 1.0) * MASK_FILL
        return ad.reduce(ad.add_const(m, fill), "max", axis=1)
    summed = ad.reduce(ad.mul_const(m, other_mask.astype(np.float64)), "sum", axis=1)
    return ad.mul_const(summed, 1.0 / count)


def extractive_pool(
    m: Tensor,
    x: Tensor,
    target_mask: np.ndarray,
    reducer: str,
    other_mask: np.ndarray | None = None,
    target_axis: int = 0,
) -> tuple[Tensor, np.ndarray]:
    """Score each word of ``x`` by reducing its affinity row, softmax the
    scores over unmasked words, and return the weighted word sum.

    ``target_axis`` says which axis of ``m`` indexes ``x``'s positions; the
    reduction always runs over the other axis.  Returns the pooled d-vector
    and a detached copy of the attention weights.
    """
    if target_axis == 1:
        m = ad.transpose(m)
    scores = _masked_scores(m, reducer, other_mask)
    weights = ad.softmax_masked(scores, np.asarray(target_mask, dtype=bool))
    pooled = ad.matmul(weights, x)
    return pooled, weights.data.copy()


def alignment_pool(
    m: Tensor, v: Tensor, v_mask: np.ndarray
) -> tuple[Tensor, np.ndarray]:
    """Column-wise soft alignment: R_j = sum_i softmax_i(M[:, j]) * V_i.

    ``m`` is (len(V) x n_targets); masked rows of V get exactly zero weight.
    Returns R (n_targets x d) and the detached weight matrix.
    """
    mask_full = np.broadcast_to(
        np.asarray(v_mask, dtype=bool)[:, None], m.data.shape
    )
    weights = ad.softmax_masked(m, mask_full, axis=0)
    aligned = ad.matmul(ad.transpose(weights), v)
    return aligned, weights.data.copy()


def sequence_pool(r: Tensor, mask: np.ndarray, reducer: str) -> Tensor:
    """Per-dimension max or mean over the unmasked rows of ``r``."""
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise DegenerateMaskError("sequence pooling over a fully masked sentence")
    if reducer == "max":
        fill = ((mask.astype(np.float64) - 1.0) * MASK_FILL)[:, None]
        return ad.reduce(ad.add_const(r, fill), "max", axis=0)
    summed = ad.reduce(ad.mul_const(r, mask.astype(np.float64)[:, None]), "sum", axis=0)
    return ad.mul_const(summed, 1.0 / count)


def _side_features(
    x: Tensor,
    x_mask: np.ndarray,
    other: Tensor,
    other_mask: np.ndarray,
    w_self: Tensor | None,
    co_matrix: Tensor | None,
    families: tuple[str, ...],
) -> AttentionFeatureSet:
    """All enabled features for one side.

    ``co_matrix`` holds the cross affinity with this side's words on the
    column axis (i.e. other x this), matching the orientation produced by
    ``affinity(other, x)``.
    """
    out = AttentionFeatureSet()

    if "self" in families:
        s = self_projection(x, w_self)
        for reducer, name in (("max", "m_self"), ("mean", "n_self")):
            vec, wts = extractive_pool(s, x, x_mask, reducer)
            out.vectors[name] = vec
            out.extractive_weights[name] = wts

    if "intra" in families:
        intra = affinity(x, x)
        for reducer, name in (("max", "m_intra"), ("mean", "n_intra")):
            vec, wts = extractive_pool(intra, x, x_mask, reducer, other_mask=x_mask)
            out.vectors[name] = vec
            out.extractive_weights[name] = wts
        aligned, _ = alignment_pool(intra, x, x_mask)
        out.vectors["k_intra"] = sequence_pool(aligned, x_mask, "max")
        out.vectors["l_intra"] = sequence_pool(aligned, x_mask, "mean")

    if "co" in families:
        for reducer, name in (("max", "m_co"), ("mean", "n_co")):
            vec, wts = extractive_pool(
                co_matrix, x, x_mask, reducer, other_mask=other_mask, target_axis=1
            )
            out.vectors[name] = vec
            out.extractive_weights[name] = wts
        aligned, _ = alignment_pool(co_matrix, other, other_mask)
        out.vectors["k_co"] = sequence_pool(aligned, x_mask, "max")
        out.vectors["l_co"] = sequence_pool(aligned, x_mask, "mean")

    return out


def generate_features(
    q: Tensor,
    a: Tensor,
    q_mask: np.ndarray,
    a_mask: np.ndarray,
    w_self_q: Tensor | None,
    w_self_a: Tensor | None,
    families: tuple[str, ...] = ("self", "intra", "co"),
) -> tuple[AttentionFeatureSet, AttentionFeatureSet]:
    """Feature sets for both sides of a question/answer pair."""
    co_q = affinity(a, q) if "co" in families else None  # (a x q)
    co_a = ad.transpose(co_q) if co_q is not None else None  # (q x a)
    feats_q = _side_features(q, q_mask, a, a_mask, w_self_q, co_q, families)
    feats_a = _side_features(a, a_mask, q, q_mask, w_self_a, co_a, families)
    return feats_q, feats_a


def augment(
    x: Tensor, feats: AttentionFeatureSet, mask: np.ndarray
) -> tuple[Tensor, np.ndarray]:
    """Append the feature vectors as extra sequence positions.

    Feature slots are always unmasked; the word slots keep their mask.
    """
    ordered = feats.ordered()
    if not ordered:
        return x, np.asarray(mask, dtype=bool)
    d = x.data.shape[1]
    rows = [x] + [ad.reshape(f, (1, d)) for f in ordered]
    out = ad.concat(rows, axis=0)
    aug_mask = np.concatenate(
        [np.asarray(mask, dtype=bool), np.ones(len(ordered), dtype=bool)]
    )
    return out, aug_mask
