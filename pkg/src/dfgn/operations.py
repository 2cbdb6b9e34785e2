"""The command surface shared by the HTTP service and the CLI.

Each operation takes a validated RunConfig plus command arguments, runs the
corresponding pipeline in-process, optionally writes its report file, and
returns a JSON-serializable dict.  The service exposes these over HTTP;
the CLI either calls them directly (embedded mode) or posts the same
payloads to a server.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from . import optim, training
from .config import RunConfig
from .data import tokenize
from .errors import ConfigError, InputError
from .inspection import inspect_pair, write_inspection
from .model import score_candidate


def _with_overrides(
    config: RunConfig, seed: Optional[int] = None, checkpoint: Optional[str] = None
) -> RunConfig:
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if checkpoint is not None:
        updates["checkpoint_path"] = checkpoint
    return config.model_copy(update=updates) if updates else config


def _write_json(payload: dict, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def op_train(
    config: RunConfig,
    seed: Optional[int] = None,
    checkpoint: Optional[str] = None,
    out: Optional[str] = None,
) -> dict:
    config = _with_overrides(config, seed, checkpoint)
    if config.checkpoint_path is None:
        raise ConfigError("training needs a checkpoint path (--checkpoint or config)")
    result = training.train(config)
    payload = {
        "checkpoint_path": result.checkpoint_path,
        "best_epoch": result.best_epoch,
        "best_dev_map": result.best_dev_map,
        "epochs": [e.to_dict() for e in result.epochs],
    }
    _write_json(payload, out)
    return payload


def _load_for_eval(config: RunConfig, checkpoint: str):
    ck = optim.load_checkpoint(checkpoint)
    params = optim.restore_params(ck, config)
    table = training.load_table(config)
    return params, table


def op_eval(
    config: RunConfig,
    checkpoint: str,
    split: str = "test",
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> dict:
    from . import data as data_io

    config = _with_overrides(config, seed)
    params, table = _load_for_eval(config, checkpoint)
    groups = data_io.load_split(config, split)
    report = training.evaluate_groups(params, config, table, groups)
    payload = {"split": split, **report.to_dict()}
    _write_json(payload, out)
    return payload


def op_ablate(
    config: RunConfig,
    presets: list[str],
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> dict:
    config = _with_overrides(config, seed)
    rows = training.run_ablation(config, presets)
    payload = {
        "rows": [
            {
                "preset": r.preset,
                "label": r.label,
                "parameter_count": r.parameter_count,
                "map": r.map,
                "mrr": r.mrr,
                "p_at_1": r.p_at_1,
            }
            for r in rows
        ],
        "table": training.format_ablation_table(rows),
    }
    _write_json(payload, out)
    return payload


def op_inspect(
    config: RunConfig,
    checkpoint: str,
    question: str,
    answer: str,
    out: Optional[str] = None,
) -> dict:
    params, table = _load_for_eval(config, checkpoint)
    q_tokens = tokenize(question)
    a_tokens = tokenize(answer)
    if not q_tokens:
        raise InputError("question tokenized to nothing")
    if not a_tokens:
        raise InputError("answer tokenized to nothing")
    payload = inspect_pair(params, config, table, q_tokens, a_tokens)
    if out:
        write_inspection(payload, out)
    return payload


def op_score(
    config: RunConfig,
    checkpoint: str,
    question: str,
    candidates: list[str],
) -> dict:
    from . import data as data_io

    if not candidates:
        raise InputError("no candidate answers supplied")
    params, table = _load_for_eval(config, checkpoint)
    q_tokens = tokenize(question)
    if not q_tokens:
        raise InputError("question tokenized to nothing")
    q_ids, q_mask = data_io.encode_sentence(q_tokens, table, config.q_max)
    q_vecs = table.embed(q_ids)
    scores = []
    for cand in candidates:
        tokens = tokenize(cand)
        a_ids, a_mask = data_io.encode_sentence(tokens, table, config.a_max)
        logit, _ = score_candidate(
            params, config, q_vecs, q_mask, table.embed(a_ids), a_mask
        )
        scores.append(float(logit.item()))
    from .metrics import rank_candidates

    return {"scores": scores, "ranking": rank_candidates(scores)}
