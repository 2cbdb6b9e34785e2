"""Attention-inspection dumps: second co-attention weights and the
extractive pooling vectors for one question/answer pair, as structured JSON.

Row/column labels carry the truncated tokens, explicit ``<pad>`` markers,
and the feature-slot names so the matrices can be plotted directly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .config import RunConfig
from .data import EmbeddingTable, encode_sentence
from .errors import InputError
from .model import ModelParams, score_candidate

INSPECTION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "question_tokens", "answer_tokens", "score",
        "question_labels", "answer_labels", "extractive_weights",
    ],
    "properties": {
        "question_tokens": {"type": "array", "items": {"type": "string"}},
        "answer_tokens": {"type": "array", "items": {"type": "string"}},
        "score": {"type": "number"},
        "question_labels": {"type": "array", "items": {"type": "string"}},
        "answer_labels": {"type": "array", "items": {"type": "string"}},
        "extractive_weights": {
            "type": "object",
            "properties": {
                "question": {"$ref": "#/$defs/weight_vectors"},
                "answer": {"$ref": "#/$defs/weight_vectors"},
            },
        },
        "second_coattention": {
            "type": ["object", "null"],
            "properties": {
                "question_target": {"$ref": "#/$defs/direction"},
                "answer_target": {"$ref": "#/$defs/direction"},
            },
        },
    },
    "$defs": {
        "matrix": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}},
        },
        "weight_vectors": {
            "type": "object",
            "additionalProperties": {
                "type": "array", "items": {"type": "number"},
            },
        },
        "direction": {
            "type": "object",
            "required": ["affinity", "weights", "thresholds", "retained", "common_block"],
            "properties": {
                "affinity": {"$ref": "#/$defs/matrix"},
                "weights": {"$ref": "#/$defs/matrix"},
                "thresholds": {"$ref": "#/$defs/matrix"},
                "retained": {"$ref": "#/$defs/matrix"},
                "common_block": {"$ref": "#/$defs/matrix"},
            },
        },
    },
}


def validate_inspection(payload: dict) -> None:
    """Raise jsonschema.ValidationError if the dump shape is wrong."""
    jsonschema.validate(payload, INSPECTION_SCHEMA)


def _slot_labels(tokens: list[str], max_len: int, feature_names: list[str]) -> list[str]:
    kept = tokens[:max_len]
    pads = ["<pad>"] * (max_len - len(kept))
    return kept + pads + list(feature_names)


def inspect_pair(
    params: ModelParams,
    config: RunConfig,
    table: EmbeddingTable,
    question_tokens: list[str],
    answer_tokens: list[str],
) -> dict:
    """Score one pair with diagnostics collection and build the dump payload."""
    if not question_tokens:
        raise InputError("question tokenized to nothing; supply a non-empty question")
    if not answer_tokens:
        raise InputError("answer tokenized to nothing; supply a non-empty answer")
    q_ids, q_mask = encode_sentence(question_tokens, table, config.q_max)
    a_ids, a_mask = encode_sentence(answer_tokens, table, config.a_max)
    logit, diag = score_candidate(
        params, config, table.embed(q_ids), q_mask, table.embed(a_ids), a_mask,
        collect=True,
    )

    payload: dict = {
        "question_tokens": question_tokens[: config.q_max],
        "answer_tokens": answer_tokens[: config.a_max],
        "score": float(logit.item()),
        "question_labels": _slot_labels(
            question_tokens, config.q_max, diag.feature_names_q
        ),
        "answer_labels": _slot_labels(
            answer_tokens, config.a_max, diag.feature_names_a
        ),
        "question_mask": diag.q_aug_mask.astype(int).tolist(),
        "answer_mask": diag.a_aug_mask.astype(int).tolist(),
        "extractive_weights": {
            "question": {
                name: wts.tolist() for name, wts in diag.extractive_weights_q.items()
            },
            "answer": {
                name: wts.tolist() for name, wts in diag.extractive_weights_a.items()
            },
        },
        "second_coattention": None,
    }

    if diag.threshold_q is not None:
        q_words, a_words = config.q_max, config.a_max

        def direction(affinity: np.ndarray, tdiag, rows: int, cols: int) -> dict:
            return {
                "affinity": affinity.tolist(),
                "weights": tdiag.weights.tolist(),
                "thresholds": tdiag.thresholds.tolist(),
                "retained": tdiag.retained.tolist(),
                # the word-by-word block shared with a feature-free model
                "common_block": tdiag.weights[:rows, :cols].tolist(),
            }

        payload["second_coattention"] = {
            "question_target": direction(
                diag.second_affinity_q, diag.threshold_q, a_words, q_words
            ),
            "answer_target": direction(
                diag.second_affinity_a, diag.threshold_a, q_words, a_words
            ),
        }
    return payload


def write_inspection(payload: dict, out_path: str | Path) -> None:
    validate_inspection(payload)
    Path(out_path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
