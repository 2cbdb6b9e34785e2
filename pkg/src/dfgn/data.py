"""Embedding tables, dataset ingestion, and listwise batch assembly.

Supported dataset layouts (see README for examples):

* ``wikiqa_tsv`` -- tab-separated with a header row; the columns
  ``QuestionID``, ``Question``, ``SentenceID``, ``Sentence``, ``Label`` are
  located by name, extra columns are ignored.
* ``trecqa`` -- headerless tab-separated rows mapping onto the same logical
  schema: ``question_id<TAB>question<TAB>sentence<TAB>label``; sentence ids
  are synthesized as ``<question_id>-<row>``.
* ``insuranceqa_v1`` -- the split file plus two companions: a vocabulary
  (``token_id<TAB>word`` per line) and an answer pool
  (``answer_id<TAB>token ids`` per line).  Train split lines are
  ``question tokens<TAB>positive answer ids``; dev/test split lines are
  ``positive ids<TAB>question tokens<TAB>candidate pool ids``.

Embeddings are a UTF-8 text file, one token followed by its vector per
line.  Row 0 of the loaded table is the zero vector, shared by padding and
out-of-vocabulary tokens (embeddings are frozen, so OOV rows stay inert).
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig
from .errors import ConfigError, ContractError, DataFormatError

logger = logging.getLogger(__name__)

_PUNCT = string.punctuation


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip surrounding punctuation."""
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(_PUNCT)
        if token:
            tokens.append(token)
    return tokens


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingTable:
    """Frozen word vectors; index 0 is the shared padding/OOV zero row."""

    vocab: dict[str, int]
    vectors: np.ndarray
    skipped_lines: int = 0
    oov_policy: str = "unknown tokens map to index 0 (zero vector, shared with padding)"

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    def lookup(self, tokens: list[str]) -> np.ndarray:
        return np.array([self.vocab.get(t, 0) for t in tokens], dtype=np.int64)

    def embed(self, ids: np.ndarray) -> np.ndarray:
        return self.vectors[ids]


def load_embeddings(path: str | Path, dim: int) -> EmbeddingTable:
    """Parse a token-per-line vector file into a table with a pad row.

    A line whose field count is not 1+dim, or whose values do not parse as
    reals, is a hard format error naming the line.  Blank lines and
    duplicate tokens are skipped, counted, and reported.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read embedding file {path}: {exc}") from exc

    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = [np.zeros(dim)]
    skipped = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            skipped += 1
            continue
        fields = line.split()
        if len(fields) != dim + 1:
            raise DataFormatError(
                f"{path}:{lineno}: expected a token and {dim} values, "
                f"got {len(fields)} fields"
            )
        token = fields[0]
        if token in vocab:
            skipped += 1
            continue
        try:
            vec = np.array([float(v) for v in fields[1:]], dtype=np.float64)
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: non-numeric value: {exc}") from exc
        vocab[token] = len(rows)
        rows.append(vec)
    if skipped:
        logger.warning("embedding file %s: skipped %d blank/duplicate lines", path, skipped)
    return EmbeddingTable(vocab=vocab, vectors=np.vstack(rows), skipped_lines=skipped)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


@dataclass
class Candidate:
    tokens: list[str]
    label: int
    source_id: str


@dataclass
class CandidateGroup:
    """One question with its labeled candidate answers."""

    question_id: str
    question: list[str]
    candidates: list[Candidate] = field(default_factory=list)

    def positive_count(self) -> int:
        return sum(c.label for c in self.candidates)


def _parse_label(value: str, where: str) -> int:
    if value not in ("0", "1"):
        raise DataFormatError(f"{where}: label must be 0 or 1, got {value!r}")
    return int(value)


def _parse_wikiqa(path: Path) -> list[CandidateGroup]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        return []
    header = lines[0].split("\t")
    required = ("QuestionID", "Question", "SentenceID", "Sentence", "Label")
    try:
        cols = {name: header.index(name) for name in required}
    except ValueError as exc:
        raise DataFormatError(
            f"{path}:1: header must contain columns {required}; got {header}"
        ) from exc
    groups: dict[str, CandidateGroup] = {}
    width = max(cols.values()) + 1
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) < width:
            raise DataFormatError(
                f"{path}:{lineno}: expected at least {width} tab-separated "
                f"columns, got {len(fields)}"
            )
        qid = fields[cols["QuestionID"]]
        group = groups.get(qid)
        if group is None:
            group = groups[qid] = CandidateGroup(
                question_id=qid, question=tokenize(fields[cols["Question"]])
            )
        group.candidates.append(
            Candidate(
                tokens=tokenize(fields[cols["Sentence"]]),
                label=_parse_label(fields[cols["Label"]], f"{path}:{lineno}"),
                source_id=fields[cols["SentenceID"]],
            )
        )
    return list(groups.values())


def _parse_trecqa(path: Path) -> list[CandidateGroup]:
    groups: dict[str, CandidateGroup] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise DataFormatError(
                f"{path}:{lineno}: expected question_id<TAB>question<TAB>"
                f"sentence<TAB>label, got {len(fields)} fields"
            )
        qid, question, sentence, label = fields
        group = groups.get(qid)
        if group is None:
            group = groups[qid] = CandidateGroup(
                question_id=qid, question=tokenize(question)
            )
        group.candidates.append(
            Candidate(
                tokens=tokenize(sentence),
                label=_parse_label(label, f"{path}:{lineno}"),
                source_id=f"{qid}-{lineno}",
            )
        )
    return list(groups.values())


def _read_insurance_vocab(path: Path) -> dict[str, str]:
    vocab = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise DataFormatError(
                f"{path}:{lineno}: vocabulary lines are token_id<TAB>word"
            )
        vocab[fields[0]] = fields[1]
    return vocab


def _read_insurance_answers(path: Path, vocab: dict[str, str]) -> dict[str, list[str]]:
    answers = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise DataFormatError(
                f"{path}:{lineno}: answer lines are answer_id<TAB>token ids"
            )
        answers[fields[0]] = _insurance_tokens(fields[1], vocab, f"{path}:{lineno}")
    return answers


def _insurance_tokens(ids: str, vocab: dict[str, str], where: str) -> list[str]:
    tokens = []
    for tid in ids.split():
        word = vocab.get(tid)
        if word is None:
            raise DataFormatError(f"{where}: unknown token id {tid!r}")
        tokens.extend(tokenize(word) or [word.lower()])
    return tokens


def _parse_insuranceqa(
    path: Path, answers_path: Optional[str], vocab_path: Optional[str]
) -> list[CandidateGroup]:
    if not answers_path or not vocab_path:
        raise ConfigError(
            "insuranceqa_v1 needs insurance_answers_path and insurance_vocab_path"
        )
    vocab = _read_insurance_vocab(Path(vocab_path))
    answers = _read_insurance_answers(Path(answers_path), vocab)

    def answer_tokens(aid: str, where: str) -> list[str]:
        tokens = answers.get(aid)
        if tokens is None:
            raise DataFormatError(f"{where}: unknown answer id {aid!r}")
        return tokens

    groups: list[CandidateGroup] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        where = f"{path}:{lineno}"
        if len(fields) == 2:  # train: question tokens, positive answer ids
            question, positives = fields
            pool: list[tuple[str, int]] = [
                (aid, 1) for aid in positives.split()
            ]
        elif len(fields) == 3:  # dev/test: positive ids, question, pool ids
            positives, question, pool_ids = fields
            positive_set = set(positives.split())
            pool = [(aid, 1 if aid in positive_set else 0) for aid in pool_ids.split()]
            # positives absent from the listed pool still count as candidates
            for aid in positives.split():
                if aid not in {p for p, _ in pool}:
                    pool.append((aid, 1))
        else:
            raise DataFormatError(
                f"{where}: expected 2 (train) or 3 (pool) tab-separated fields, "
                f"got {len(fields)}"
            )
        group = CandidateGroup(
            question_id=f"q{lineno}",
            question=_insurance_tokens(question, vocab, where),
        )
        for aid, label in pool:
            group.candidates.append(
                Candidate(tokens=answer_tokens(aid, where), label=label, source_id=aid)
            )
        groups.append(group)
    return groups


def parse_dataset(
    path: str | Path,
    data_format: str,
    answers_path: Optional[str] = None,
    vocab_path: Optional[str] = None,
) -> list[CandidateGroup]:
    """Parse one split into candidate groups, preserving file order."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"dataset file not found: {path}")
    if data_format == "wikiqa_tsv":
        return _parse_wikiqa(path)
    if data_format == "trecqa":
        return _parse_trecqa(path)
    if data_format == "insuranceqa_v1":
        return _parse_insuranceqa(path, answers_path, vocab_path)
    raise ConfigError(f"unknown dataset format {data_format!r}")


def load_split(config: RunConfig, split: str) -> list[CandidateGroup]:
    """Load the train/dev/test split named by the config."""
    paths = {"train": config.train_path, "dev": config.dev_path, "test": config.test_path}
    if split not in paths:
        raise ConfigError(f"unknown split {split!r}; expected train, dev, or test")
    if paths[split] is None:
        raise ConfigError(f"config has no {split}_path")
    return parse_dataset(
        config.resolve_path(paths[split]),
        config.data_format,
        answers_path=config.resolve_path(config.insurance_answers_path),
        vocab_path=config.resolve_path(config.insurance_vocab_path),
    )


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


def encode_sentence(
    tokens: list[str], table: EmbeddingTable, max_len: int
) -> tuple[np.ndarray, np.ndarray]:
    """Token ids truncated/zero-padded to ``max_len``, plus the slot mask.

    An empty sentence occupies one padding-id slot with a live mask bit so
    downstream normalizations stay well-defined.
    """
    kept = tokens[:max_len]
    ids = np.zeros(max_len, dtype=np.int64)
    mask = np.zeros(max_len, dtype=bool)
    if kept:
        ids[: len(kept)] = table.lookup(kept)
        mask[: len(kept)] = True
    else:
        mask[0] = True
    return ids, mask


@dataclass
class PaddedBatch:
    """A fixed-size listwise training batch of B groups x N candidates."""

    question_ids: np.ndarray    # (B, q_max) int64
    question_mask: np.ndarray   # (B, q_max) bool
    answer_ids: np.ndarray      # (B, N, a_max) int64
    answer_mask: np.ndarray     # (B, N, a_max) bool
    labels: np.ndarray          # (B, N) float64, binary
    target: np.ndarray          # (B, N) float64, rows sum to 1
    question_ids_source: list[str]


def build_negative_pool(groups: list[CandidateGroup]) -> list[list[str]]:
    """All negative candidate sentences of a split, for sampling fill."""
    return [c.tokens for g in groups for c in g.candidates if c.label == 0]


def make_training_batch(
    groups: list[CandidateGroup],
    table: EmbeddingTable,
    config: RunConfig,
    rng: np.random.Generator,
    negative_pool: Optional[list[list[str]]] = None,
) -> PaddedBatch:
    """Assemble a listwise batch: all positives plus sampled negatives.

    Per group, every positive is kept (capped at N), then negatives are
    drawn without replacement from the group's own negatives and, if those
    run out, from the split-wide negative pool (with replacement once the
    pool is exhausted).  Candidate order is shuffled so label position
    carries no signal.  Groups without a positive are skipped with a
    warning.
    """
    n = config.candidates
    kept_groups = []
    for g in groups:
        if g.positive_count() == 0:
            logger.warning("skipping group %s: no positive candidate", g.question_id)
            continue
        kept_groups.append(g)
    if not kept_groups:
        raise ContractError("training batch has no group with a positive candidate")

    b = len(kept_groups)
    q_ids = np.zeros((b, config.q_max), dtype=np.int64)
    q_mask = np.zeros((b, config.q_max), dtype=bool)
    a_ids = np.zeros((b, n, config.a_max), dtype=np.int64)
    a_mask = np.zeros((b, n, config.a_max), dtype=bool)
    labels = np.zeros((b, n), dtype=np.float64)
    sources = []

    for bi, g in enumerate(kept_groups):
        q_ids[bi], q_mask[bi] = encode_sentence(g.question, table, config.q_max)
        sources.append(g.question_id)

        positives = [c.tokens for c in g.candidates if c.label == 1][:n]
        own_negatives = [c.tokens for c in g.candidates if c.label == 0]
        need = n - len(positives)
        rng.shuffle(own_negatives)
        negatives = own_negatives[:need]
        short = need - len(negatives)
        if short > 0:
            pool = negative_pool or []
            if pool:
                replace = len(pool) < short
                picks = rng.choice(len(pool), size=short, replace=replace)
                negatives.extend(pool[int(i)] for i in picks)
            else:
                # nothing to sample: recycle own negatives, else positives
                recycle = own_negatives or positives
                picks = rng.choice(len(recycle), size=short, replace=True)
                negatives.extend(recycle[int(i)] for i in picks)

        sentences = [(tok, 1.0) for tok in positives] + [(tok, 0.0) for tok in negatives]
        order = rng.permutation(len(sentences))
        for slot, idx in enumerate(order):
            tokens, label = sentences[int(idx)]
            a_ids[bi, slot], a_mask[bi, slot] = encode_sentence(tokens, table, config.a_max)
            labels[bi, slot] = label

    target = labels / labels.sum(axis=1, keepdims=True)
    return PaddedBatch(
        question_ids=q_ids,
        question_mask=q_mask,
        answer_ids=a_ids,
        answer_mask=a_mask,
        labels=labels,
        target=target,
        question_ids_source=sources,
    )
