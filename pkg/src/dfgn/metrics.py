"""Ranking metrics (MAP, MRR, P@1) and the question-type breakdown.

Candidates are ranked by score descending with ties broken by original
candidate index (lower first), so evaluation is deterministic.  Questions
without a positive candidate cannot be scored by these metrics; they are
excluded from aggregation and the exclusion count is always reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

QUESTION_TYPES = ("what", "how", "where", "who", "when", "other")


def question_type(question_tokens: list[str]) -> str:
    """Bucket a question by its leading interrogative token."""
    if question_tokens:
        head = question_tokens[0].lower()
        if head in QUESTION_TYPES[:-1]:
            return head
    return "other"


def rank_candidates(scores: list[float]) -> list[int]:
    """Candidate indices sorted by score descending, stable on ties."""
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def average_precision(scores: list[float], labels: list[int]) -> float:
    """Mean over positive ranks k of (positives within top k) / k."""
    if sum(labels) == 0:
        raise ContractError("average precision needs at least one positive")
    order = rank_candidates(scores)
    hits = 0
    precisions = []
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            precisions.append(hits / rank)
    # left-to-right summation: matches the definition computed by hand
    return sum(precisions) / len(precisions)


def reciprocal_rank(scores: list[float], labels: list[int]) -> float:
    """1 / rank of the highest-ranked positive."""
    if sum(labels) == 0:
        raise ContractError("reciprocal rank needs at least one positive")
    for rank, idx in enumerate(rank_candidates(scores), start=1):
        if labels[idx] == 1:
            return 1.0 / rank
    raise AssertionError("unreachable: a positive exists")


def precision_at_1(scores: list[float], labels: list[int]) -> float:
    """1.0 iff the top-ranked candidate is positive."""
    if sum(labels) == 0:
        raise ContractError("precision@1 needs at least one positive")
    return float(labels[rank_candidates(scores)[0]])


@dataclass
class QuestionResult:
    question_id: str
    question_type: str
    n_candidates: int
    average_precision: float
    reciprocal_rank: float
    precision_at_1: float


@dataclass
class TypeStats:
    count: int = 0
    share: float = 0.0
    mrr: float = 0.0


@dataclass
class EvalReport:
    """Aggregate metrics over the questions that have a positive candidate."""

    map: float
    mrr: float
    p_at_1: float
    num_questions: int
    excluded_no_positive: int
    question_types: dict[str, TypeStats] = field(default_factory=dict)
    per_question: list[QuestionResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "map": self.map,
            "mrr": self.mrr,
            "p_at_1": self.p_at_1,
            "num_questions": self.num_questions,
            "excluded_no_positive": self.excluded_no_positive,
            "question_types": {
                t: {"count": s.count, "share": s.share, "mrr": s.mrr}
                for t, s in self.question_types.items()
            },
            "per_question": [
                {
                    "question_id": r.question_id,
                    "question_type": r.question_type,
                    "n_candidates": r.n_candidates,
                    "average_precision": r.average_precision,
                    "reciprocal_rank": r.reciprocal_rank,
                    "precision_at_1": r.precision_at_1,
                }
                for r in self.per_question
            ],
        }


def evaluate_rankings(
    items: list[tuple[str, list[str], list[float], list[int]]]
) -> EvalReport:
    """Aggregate (question_id, question_tokens, scores, labels) rankings."""
    results: list[QuestionResult] = []
    excluded = 0
    for qid, tokens, scores, labels in items:
        if sum(labels) == 0:
            excluded += 1
            continue
        results.append(
            QuestionResult(
                question_id=qid,
                question_type=question_type(tokens),
                n_candidates=len(labels),
                average_precision=average_precision(scores, labels),
                reciprocal_rank=reciprocal_rank(scores, labels),
                precision_at_1=precision_at_1(scores, labels),
            )
        )

    types: dict[str, TypeStats] = {}
    n = len(results)
    for r in results:
        stats = types.setdefault(r.question_type, TypeStats())
        stats.count += 1
    for t, stats in types.items():
        rrs = [r.reciprocal_rank for r in results if r.question_type == t]
        stats.share = stats.count / n if n else 0.0
        stats.mrr = float(np.mean(rrs)) if rrs else 0.0

    return EvalReport(
        map=float(np.mean([r.average_precision for r in results])) if results else 0.0,
        mrr=float(np.mean([r.reciprocal_rank for r in results])) if results else 0.0,
        p_at_1=float(np.mean([r.precision_at_1 for r in results])) if results else 0.0,
        num_questions=n,
        excluded_no_positive=excluded,
        question_types=types,
        per_question=results,
    )
