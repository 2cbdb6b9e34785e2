"""Second co-attention with learned dynamic thresholds.

Two affinity views of the encoded sequences are computed: a plain one and a
bilinear one through a learned matrix.  Both are column-normalized, and a
cell keeps its plain weight only where it is at least its bilinear
counterpart; surviving weights are summed against the source sequence
without renormalization (a renormalizing variant sits behind a flag).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def second_affinity(e_a: Tensor, e_q: Tensor) -> Tensor:
    """Plain affinity of two encoded sequences: E_A (E_Q)^T."""
    return ad.matmul(e_a, ad.transpose(e_q))


def threshold_affinity(e_a: Tensor, w: Tensor, e_q: Tensor) -> Tensor:
    """Bilinear affinity E_A W (E_Q)^T producing the per-cell threshold scores."""
    return ad.matmul(ad.matmul(e_a, w), ad.transpose(e_q))


def phi(x: float, y: float) -> float:
    """Scalar dynamic-threshold gate: x if x >= y else 0."""
    return x if x >= y else 0.0


@dataclass
class ThresholdDiagnostics:
    """Detached weight matrices of one thresholded alignment."""

    weights: np.ndarray      # column-softmax of the plain affinity
    thresholds: np.ndarray   # column-softmax of the bilinear affinity
    retained: np.ndarray     # weights surviving the gate (post-renorm if enabled)


def thresholded_align(
    g: Tensor,
    g_hat: Tensor,
    v: Tensor,
    v_mask: np.ndarray,
    renormalize: bool = False,
    straight_through: bool = False,
) -> tuple[Tensor, ThresholdDiagnostics]:
    """Alignment pooling of ``v`` under threshold-filtered column weights.

    For each target column j: w = softmax over i of g[:, j], t likewise for
    g_hat, retained_i = w_i where w_i >= t_i else 0, and the output row j is
    sum_i retained_i * v_i.  Surviving weights are NOT renormalized unless
    ``renormalize`` is set; a column may lose all its mass and yield a zero
    row.
    """
    mask_full = np.broadcast_to(np.asarray(v_mask, dtype=bool)[:, None], g.data.shape)
    weights = ad.softmax_masked(g, mask_full, axis=0)
    thresholds = ad.softmax_masked(g_hat, mask_full, axis=0)
    retained = ad.phi_filter(weights, thresholds, straight_through=straight_through)
    if renormalize:
        # epsilon keeps fully-zeroed columns at zero instead of dividing by 0
        colsum = ad.reduce(retained, "sum", axis=0)
        retained = ad.elementwise(
            retained, ad.reciprocal(ad.add_const(colsum, 1e-12)), "mul"
        )
    aligned = ad.matmul(ad.transpose(retained), v)
    diag = ThresholdDiagnostics(
        weights=weights.data.copy(),
        thresholds=thresholds.data.copy(),
        retained=retained.data.copy(),
    )
    return aligned, diag
