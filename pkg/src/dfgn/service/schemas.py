"""Pydantic request/response models for the HTTP service.

The embedded RunConfig is validated in full, so a malformed config is a
422 before any work starts.
"""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field

from ..config import RunConfig


class HealthResponse(BaseModel):
    status: str
    version: str


class ConfigResponse(BaseModel):
    config: RunConfig


class TrainRequest(BaseModel):
    config: RunConfig
    seed: Optional[int] = None
    checkpoint: Optional[str] = None
    out: Optional[str] = None


class EpochStats(BaseModel):
    epoch: int
    train_loss: float
    dev_map: float
    dev_mrr: float
    dev_p_at_1: float
    seconds: float


class TrainResponse(BaseModel):
    checkpoint_path: Optional[str]
    best_epoch: int
    best_dev_map: float
    epochs: list[EpochStats]


class EvalRequest(BaseModel):
    config: RunConfig
    checkpoint: str
    split: str = "test"
    seed: Optional[int] = None
    out: Optional[str] = None


class QuestionTypeStats(BaseModel):
    count: int
    share: float
    mrr: float


class QuestionDetail(BaseModel):
    question_id: str
    question_type: str
    n_candidates: int
    average_precision: float
    reciprocal_rank: float
    precision_at_1: float


class EvalResponse(BaseModel):
    split: str
    map: float
    mrr: float
    p_at_1: float
    num_questions: int
    excluded_no_positive: int
    question_types: dict[str, QuestionTypeStats]
    per_question: list[QuestionDetail]


class AblateRequest(BaseModel):
    config: RunConfig
    presets: list[str] = Field(min_length=1)
    seed: Optional[int] = None
    out: Optional[str] = None


class AblationRow(BaseModel):
    preset: str
    label: str
    parameter_count: int
    map: float
    mrr: float
    p_at_1: float


class AblateResponse(BaseModel):
    rows: list[AblationRow]
    table: str


class InspectRequest(BaseModel):
    config: RunConfig
    checkpoint: str
    question: str
    answer: str
    out: Optional[str] = None


class InspectResponse(BaseModel):
    # the full dump payload; structure contract lives in
    # dfgn.inspection.INSPECTION_SCHEMA
    payload: dict[str, Any]


class ScoreRequest(BaseModel):
    config: RunConfig
    checkpoint: str
    question: str
    candidates: list[str] = Field(min_length=1)


class ScoreResponse(BaseModel):
    scores: list[float]
    ranking: list[int]
