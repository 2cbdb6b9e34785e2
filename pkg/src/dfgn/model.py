"""Model assembly: parameter store and the per-pair scoring pipeline.

A question/answer pair flows through feature generation, augmentation, the
gated encoder, thresholded second co-attention, compare, and the
convolutional aggregate head to a single logit.  Ablation switches bypass
single stages without touching anything else; parameters for bypassed
stages are never allocated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import features as feat
from . import head as head_ops
from . import threshold as thresh
from .autodiff import Tensor
from .config import RunConfig
from .encoder import gated_encode
from .errors import DimensionError


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape)


class ModelParams:
    """All trainable tensors, keyed by role, in a fixed iteration order."""

    def __init__(self, tensors: dict[str, Tensor], embedding_dim: int):
        self.tensors = tensors
        self.embedding_dim = embedding_dim

    @classmethod
    def initialize(cls, config: RunConfig, seed: Optional[int] = None) -> "ModelParams":
        """Seeded Glorot-uniform weights, zero biases, per the config's wiring."""
        d = config.embedding_dim
        rng = np.random.default_rng([config.seed if seed is None else seed, 0x9A2D])
        families = config.feature_families()
        t: dict[str, Tensor] = {}

        def add(name: str, arr: np.ndarray) -> None:
            t[name] = Tensor(arr, requires_grad=True)

        if "self" in families:
            add("w_self_q", _glorot(rng, d, d, (d, d)))
            add("w_self_a", _glorot(rng, d, d, (d, d)))
        if not config.no_encoder:
            for side in ("q", "a"):
                add(f"w_enc_gate_{side}", _glorot(rng, d, d, (d, d)))
                add(f"w_enc_out_{side}", _glorot(rng, d, d, (d, d)))
        if not config.no_second_coattention:
            add("w_thresh_q", _glorot(rng, d, d, (d, d)))
            add("w_thresh_a", _glorot(rng, d, d, (d, d)))
        for w in config.conv_windows:
            add(f"conv{w}_w", _glorot(rng, w * d, config.conv_filters, (w * d, config.conv_filters)))
            add(f"conv{w}_b", np.zeros(config.conv_filters))
        agg_dim = 2 * len(config.conv_windows) * config.conv_filters
        h = config.mlp_hidden
        branch_out = 1 if config.scalar_branch_fusion else h
        for side in ("q", "a"):
            add(f"mlp1_w_{side}", _glorot(rng, agg_dim, h, (agg_dim, h)))
            add(f"mlp1_b_{side}", np.zeros(h))
            add(f"mlp2_w_{side}", _glorot(rng, h, branch_out, (h, branch_out)))
            add(f"mlp2_b_{side}", np.zeros(branch_out))
        add("fuse_w", _glorot(rng, 2 * branch_out, 1, (2 * branch_out, 1)))
        add("fuse_b", np.zeros(1))
        return cls(t, d)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def values(self) -> Iterator[Tensor]:
        return iter(self.tensors.values())

    def names(self) -> list[str]:
        return list(self.tensors)

    def param_count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()


@dataclass
class PairDiagnostics:
    """Detached per-pair internals for inspection dumps and tests."""

    q_len: int = 0
    a_len: int = 0
    q_aug_len: int = 0
    a_aug_len: int = 0
    q_aug_mask: Optional[np.ndarray] = None
    a_aug_mask: Optional[np.ndarray] = None
    feature_names_q: list[str] = field(default_factory=list)
    feature_names_a: list[str] = field(default_factory=list)
    extractive_weights_q: dict[str, np.ndarray] = field(default_factory=dict)
    extractive_weights_a: dict[str, np.ndarray] = field(default_factory=dict)
    # second co-attention, one entry per target side
    second_affinity_q: Optional[np.ndarray] = None  # (a_aug x q_aug)
    second_affinity_a: Optional[np.ndarray] = None  # (q_aug x a_aug)
    threshold_q: Optional[thresh.ThresholdDiagnostics] = None
    threshold_a: Optional[thresh.ThresholdDiagnostics] = None


def score_candidate(
    params: ModelParams,
    config: RunConfig,
    q_vecs: np.ndarray,
    q_mask: np.ndarray,
    a_vecs: np.ndarray,
    a_mask: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    collect: bool = False,
) -> tuple[Tensor, Optional[PairDiagnostics]]:
    """Logit for one embedded question/answer pair (shape (1,)).

    ``q_vecs``/``a_vecs`` are frozen word vectors (padded rows zero);
    masks flag the real token slots.
    """
    if q_vecs.shape[1] != a_vecs.shape[1]:
        raise DimensionError(
            f"question and answer embedding widths differ: "
            f"{q_vecs.shape} vs {a_vecs.shape}"
        )
    q_mask = np.asarray(q_mask, dtype=bool)
    a_mask = np.asarray(a_mask, dtype=bool)
    q = Tensor(q_vecs)
    a = Tensor(a_vecs)
    diag = PairDiagnostics(q_len=q_vecs.shape[0], a_len=a_vecs.shape[0]) if collect else None

    families = config.feature_families()
    if families:
        feats_q, feats_a = feat.generate_features(
            q, a, q_mask, a_mask,
            params["w_self_q"] if "self" in families else None,
            params["w_self_a"] if "self" in families else None,
            families,
        )
        x_q, q_aug_mask = feat.augment(q, feats_q, q_mask)
        x_a, a_aug_mask = feat.augment(a, feats_a, a_mask)
        if diag:
            diag.feature_names_q = feats_q.names()
            diag.feature_names_a = feats_a.names()
            diag.extractive_weights_q = feats_q.extractive_weights
            diag.extractive_weights_a = feats_a.extractive_weights
    else:
        x_q, q_aug_mask = q, q_mask
        x_a, a_aug_mask = a, a_mask
    if diag:
        diag.q_aug_len = x_q.data.shape[0]
        diag.a_aug_len = x_a.data.shape[0]
        diag.q_aug_mask = q_aug_mask.copy()
        diag.a_aug_mask = a_aug_mask.copy()

    if config.no_encoder:
        e_q, e_a = x_q, x_a
    else:
        e_q = gated_encode(
            x_q, params["w_enc_gate_q"], params["w_enc_out_q"],
            config.dropout, training, rng,
        )
        e_a = gated_encode(
            x_a, params["w_enc_gate_a"], params["w_enc_out_a"],
            config.dropout, training, rng,
        )

    if config.no_second_coattention:
        h_q, h_a = e_q, e_a
    else:
        g_q = thresh.second_affinity(e_a, e_q)
        g_hat_q = thresh.threshold_affinity(e_a, params["w_thresh_q"], e_q)
        h_q, tdiag_q = thresh.thresholded_align(
            g_q, g_hat_q, e_a, a_aug_mask,
            renormalize=config.threshold_renormalize,
            straight_through=config.threshold_straight_through,
        )
        g_a = thresh.second_affinity(e_q, e_a)
        g_hat_a = thresh.threshold_affinity(e_q, params["w_thresh_a"], e_a)
        h_a, tdiag_a = thresh.thresholded_align(
            g_a, g_hat_a, e_q, q_aug_mask,
            renormalize=config.threshold_renormalize,
            straight_through=config.threshold_straight_through,
        )
        if diag:
            diag.second_affinity_q = g_q.data.copy()
            diag.second_affinity_a = g_a.data.copy()
            diag.threshold_q = tdiag_q
            diag.threshold_a = tdiag_a

    if config.no_compare:
        y_q, y_a = h_q, h_a
    else:
        y_q = head_ops.compare(h_q, e_q)
        y_a = head_ops.compare(h_a, e_a)

    conv_weights = {
        w: (params[f"conv{w}_w"], params[f"conv{w}_b"]) for w in config.conv_windows
    }
    agg_q = head_ops.conv_aggregate(y_q, q_aug_mask, conv_weights, config.conv_windows)
    agg_a = head_ops.conv_aggregate(y_a, a_aug_mask, conv_weights, config.conv_windows)
    branch_q = head_ops.branch_mlp(
        agg_q, params["mlp1_w_q"], params["mlp1_b_q"],
        params["mlp2_w_q"], params["mlp2_b_q"],
    )
    branch_a = head_ops.branch_mlp(
        agg_a, params["mlp1_w_a"], params["mlp1_b_a"],
        params["mlp2_w_a"], params["mlp2_b_a"],
    )
    logit = head_ops.fuse_branches(branch_q, branch_a, params["fuse_w"], params["fuse_b"])
    return logit, diag
