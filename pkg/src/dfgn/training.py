"""Listwise training loop, evaluation runner, and the ablation harness.

Every source of randomness (parameter init, batch order, negative
sampling, dropout) is derived from the config seed through independent
seed sequences, so a run is reproducible bit for bit.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import data as data_io
from . import head as head_ops
from . import optim
from .autodiff import Tape
from .config import ABLATION_PRESETS, RunConfig, apply_preset
from .data import CandidateGroup, EmbeddingTable, PaddedBatch
from .errors import ConfigError
from .metrics import EvalReport, evaluate_rankings
from .model import ModelParams, score_candidate

logger = logging.getLogger(__name__)

# seed-stream tags: keep distinct randomness sources independent
_SEED_PARAMS = 1
_SEED_ORDER = 2
_SEED_SAMPLING = 3
_SEED_DROPOUT = 4


def _rng(config: RunConfig, stream: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, stream, *tags])


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_map: float
    dev_mrr: float
    dev_p_at_1: float
    seconds: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "dev_map": self.dev_map,
            "dev_mrr": self.dev_mrr,
            "dev_p_at_1": self.dev_p_at_1,
            "seconds": self.seconds,
        }


@dataclass
class TrainResult:
    checkpoint_path: Optional[str]
    best_epoch: int
    best_dev_map: float
    epochs: list[EpochStats] = field(default_factory=list)
    params: Optional[ModelParams] = None  # best-dev snapshot


def batch_loss(
    params: ModelParams,
    config: RunConfig,
    table: EmbeddingTable,
    batch: PaddedBatch,
    training: bool,
    dropout_rng: Optional[np.random.Generator],
) -> ad.Tensor:
    """Mean listwise KL loss over the batch's groups."""
    group_losses = []
    b, n = batch.labels.shape
    for bi in range(b):
        q_vecs = table.embed(batch.question_ids[bi])
        logits = []
        for ci in range(n):
            logit, _ = score_candidate(
                params, config,
                q_vecs, batch.question_mask[bi],
                table.embed(batch.answer_ids[bi, ci]), batch.answer_mask[bi, ci],
                training=training, rng=dropout_rng,
            )
            logits.append(logit)
        loss = head_ops.listwise_loss(ad.concat(logits, axis=0), batch.labels[bi])
        group_losses.append(ad.reshape(loss, (1,)))
    total = ad.reduce(ad.concat(group_losses, axis=0), "mean")
    return total


def evaluate_groups(
    params: ModelParams,
    config: RunConfig,
    table: EmbeddingTable,
    groups: list[CandidateGroup],
) -> EvalReport:
    """Score every candidate of every group (no sampling, no grouping cap)."""
    items = []
    for g in groups:
        q_ids, q_mask = data_io.encode_sentence(g.question, table, config.q_max)
        q_vecs = table.embed(q_ids)
        scores = []
        for c in g.candidates:
            a_ids, a_mask = data_io.encode_sentence(c.tokens, table, config.a_max)
            logit, _ = score_candidate(
                params, config, q_vecs, q_mask, table.embed(a_ids), a_mask
            )
            scores.append(float(logit.item()))
        items.append((g.question_id, g.question, scores, [c.label for c in g.candidates]))
    return evaluate_rankings(items)


def load_table(config: RunConfig) -> EmbeddingTable:
    if config.embedding_path is None:
        raise ConfigError("config has no embedding_path")
    return data_io.load_embeddings(
        config.resolve_path(config.embedding_path), config.embedding_dim
    )


def train(
    config: RunConfig,
    table: Optional[EmbeddingTable] = None,
    checkpoint_path: Optional[str] = None,
) -> TrainResult:
    """Run the full training protocol and keep the best-dev-MAP checkpoint.

    All inputs are loaded and validated before any training state is
    created, so a bad path cannot leave a partial checkpoint behind.
    """
    if table is None:
        table = load_table(config)
    train_groups = data_io.load_split(config, "train")
    dev_groups = data_io.load_split(config, "dev")
    ckpt_path = checkpoint_path or config.checkpoint_path

    usable = [g for g in train_groups if g.positive_count() > 0]
    dropped = len(train_groups) - len(usable)
    if dropped:
        logger.warning("dropping %d training groups without positives", dropped)
    if not usable:
        raise ConfigError("training split has no group with a positive candidate")
    pool = data_io.build_negative_pool(usable)

    params = ModelParams.initialize(config)
    state = optim.AdamState.for_config(config)
    result = TrainResult(checkpoint_path=ckpt_path, best_epoch=-1, best_dev_map=-1.0)

    for epoch in range(config.epochs):
        started = time.monotonic()
        order = _rng(config, _SEED_ORDER, epoch).permutation(len(usable))
        losses = []
        for step, start in enumerate(range(0, len(usable), config.batch_size)):
            chosen = [usable[i] for i in order[start : start + config.batch_size]]
            batch = data_io.make_training_batch(
                chosen, table, config,
                _rng(config, _SEED_SAMPLING, epoch, step), pool,
            )
            dropout_rng = _rng(config, _SEED_DROPOUT, epoch, step)
            params.zero_grads()
            with Tape() as tape:
                loss = batch_loss(params, config, table, batch, True, dropout_rng)
                tape.backward(loss)
            optim.update(state, params)
            losses.append(loss.item())

        report = evaluate_groups(params, config, table, dev_groups)
        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            dev_map=report.map,
            dev_mrr=report.mrr,
            dev_p_at_1=report.p_at_1,
            seconds=time.monotonic() - started,
        )
        result.epochs.append(stats)
        logger.info(
            "epoch %d: loss %.4f dev MAP %.4f MRR %.4f P@1 %.4f (%.1fs)",
            epoch, stats.train_loss, stats.dev_map, stats.dev_mrr,
            stats.dev_p_at_1, stats.seconds,
        )
        if report.map > result.best_dev_map:
            result.best_dev_map = report.map
            result.best_epoch = epoch
            result.params = ModelParams(
                {
                    name: ad.Tensor(t.data.copy(), requires_grad=True)
                    for name, t in params.items()
                },
                config.embedding_dim,
            )
            if ckpt_path:
                optim.save_checkpoint(
                    ckpt_path, params, state, config,
                    extra={"epoch": epoch, "best_dev_map": report.map},
                )
    return result


@dataclass
class AblationRow:
    preset: str
    label: str
    parameter_count: int
    map: float
    mrr: float
    p_at_1: float


def run_ablation(
    config: RunConfig,
    presets: list[str],
    table: Optional[EmbeddingTable] = None,
) -> list[AblationRow]:
    """Train and evaluate each named preset with a shared seed.

    Evaluation uses the test split when configured, the dev split
    otherwise.
    """
    for preset in presets:
        if preset not in ABLATION_PRESETS:
            raise ConfigError(
                f"unknown ablation preset {preset!r}; known presets: "
                + ", ".join(ABLATION_PRESETS)
            )
    if table is None:
        table = load_table(config)
    rows = []
    for preset in presets:
        cfg = apply_preset(config, preset)
        cfg = cfg.model_copy(update={"checkpoint_path": None})
        outcome = train(cfg, table=table)
        eval_split = "test" if cfg.test_path else "dev"
        groups = data_io.load_split(cfg, eval_split)
        report = evaluate_groups(outcome.params, cfg, table, groups)
        rows.append(
            AblationRow(
                preset=preset,
                label=ABLATION_PRESETS[preset][0],
                parameter_count=outcome.params.param_count(),
                map=report.map,
                mrr=report.mrr,
                p_at_1=report.p_at_1,
            )
        )
    return rows


def format_ablation_table(rows: list[AblationRow]) -> str:
    label_width = max(len(r.label) for r in rows)
    lines = [f"{'Setting'.ljust(label_width)}  {'Params':>9}  {'MAP':>6}  {'MRR':>6}  {'P@1':>6}"]
    for r in rows:
        lines.append(
            f"{r.label.ljust(label_width)}  {r.parameter_count:>9}  "
            f"{r.map:>6.3f}  {r.mrr:>6.3f}  {r.p_at_1:>6.3f}"
        )
    return "\n".join(lines)
