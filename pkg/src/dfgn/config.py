"""Run configuration: hyperparameters, paths, and ablation switches.

A config is a flat key/value record serialized as JSON.  Unknown keys are
rejected so stale config files fail loudly.  ``RunConfig()`` with no
arguments is the canonical default protocol (truncation 12/50, 15
candidates, batch 11, Adam 0.001/0.9/0.999, L2 1e-5, clip 5, dropout 0.1,
conv windows 1-5).
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

DATA_ROOT_ENV = "DFGN_DATA_ROOT"

DATASET_FORMATS = ("wikiqa_tsv", "trecqa", "insuranceqa_v1")


class RunConfig(BaseModel):
    """Every knob of a training/evaluation run."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # data
    data_format: str = "wikiqa_tsv"
    train_path: Optional[str] = None
    dev_path: Optional[str] = None
    test_path: Optional[str] = None
    embedding_path: Optional[str] = None
    embedding_dim: int = 300
    # insuranceqa_v1 companions (answer pool + token vocabulary)
    insurance_answers_path: Optional[str] = None
    insurance_vocab_path: Optional[str] = None

    # batching / truncation
    q_max: int = 12
    a_max: int = 50
    candidates: int = 15
    batch_size: int = 11

    # optimization
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    l2_lambda: float = 1e-5
    clip_norm: float = 5.0
    dropout: float = 0.1
    epochs: int = 20

    # head sizes
    conv_windows: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    conv_filters: int = 50
    mlp_hidden: int = 128

    # ablation switches (combinable; the named presets set exactly one)
    no_encoder: bool = False
    no_compare: bool = False
    no_second_coattention: bool = False
    no_intra_features: bool = False
    no_self_features: bool = False
    no_co_features: bool = False
    no_all_features: bool = False

    # variant flags
    threshold_renormalize: bool = False
    threshold_straight_through: bool = False
    scalar_branch_fusion: bool = False

    seed: int = 13
    checkpoint_path: Optional[str] = None

    @field_validator("data_format")
    @classmethod
    def _known_format(cls, v: str) -> str:
        if v not in DATASET_FORMATS:
            raise ValueError(f"data_format must be one of {DATASET_FORMATS}, got {v!r}")
        return v

    @field_validator("dropout")
    @classmethod
    def _dropout_range(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {v}")
        return v

    @field_validator("clip_norm", "learning_rate")
    @classmethod
    def _positive(cls, v: float, info) -> float:
        if v <= 0:
            raise ValueError(f"{info.field_name} must be positive, got {v}")
        return v

    @field_validator(
        "q_max", "a_max", "candidates", "batch_size", "epochs",
        "conv_filters", "mlp_hidden", "embedding_dim",
    )
    @classmethod
    def _positive_int(cls, v: int, info) -> int:
        if v < 1:
            raise ValueError(f"{info.field_name} must be >= 1, got {v}")
        return v

    @field_validator("conv_windows")
    @classmethod
    def _windows(cls, v: list[int]) -> list[int]:
        if not v or any(w < 1 for w in v):
            raise ValueError(f"conv_windows must be nonempty positive ints, got {v}")
        return v

    def resolve_path(self, path: Optional[str]) -> Optional[str]:
        """Resolve dataset/embedding paths against $DFGN_DATA_ROOT.

        Absolute paths and paths that exist relative to the cwd pass
        through unchanged.
        """
        if path is None:
            return None
        p = Path(path)
        if p.is_absolute() or p.exists():
            return str(p)
        root = os.environ.get(DATA_ROOT_ENV)
        if root:
            return str(Path(root) / p)
        return str(p)

    def feature_families(self) -> tuple[str, ...]:
        """Enabled sentence-feature families, honoring the ablation switches."""
        if self.no_all_features:
            return ()
        families = []
        if not self.no_self_features:
            families.append("self")
        if not self.no_intra_features:
            families.append("intra")
        if not self.no_co_features:
            families.append("co")
        return tuple(families)

    def architecture_hash(self) -> str:
        """Hash of everything that shapes parameters or changes eval scoring.

        Paths, seeds, and pure training knobs are excluded so a checkpoint
        can be evaluated on any split; a mismatch means the checkpoint was
        built by a structurally different model.
        """
        fields = {
            "embedding_dim": self.embedding_dim,
            "q_max": self.q_max,
            "a_max": self.a_max,
            "conv_windows": self.conv_windows,
            "conv_filters": self.conv_filters,
            "mlp_hidden": self.mlp_hidden,
            "no_encoder": self.no_encoder,
            "no_compare": self.no_compare,
            "no_second_coattention": self.no_second_coattention,
            "no_intra_features": self.no_intra_features,
            "no_self_features": self.no_self_features,
            "no_co_features": self.no_co_features,
            "no_all_features": self.no_all_features,
            "threshold_renormalize": self.threshold_renormalize,
            "scalar_branch_fusion": self.scalar_branch_fusion,
        }
        blob = json.dumps(fields, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        return cls.from_json(raw, source=str(path))

    @classmethod
    def from_json(cls, raw: str, source: str = "<config>") -> "RunConfig":
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{source} must hold a JSON object of config keys")
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(f"{source} is invalid: {exc}") from exc


# The named ablation presets: preset -> (table label, switch overrides).
ABLATION_PRESETS: dict[str, tuple[str, dict[str, bool]]] = {
    "full": ("Full Model", {}),
    "no_encoder": ("w/o Encoder", {"no_encoder": True}),
    "no_compare": ("w/o Compare", {"no_compare": True}),
    "no_second_coattention": (
        "w/o Second Co-attention",
        {"no_second_coattention": True},
    ),
    "no_intra_features": (
        "w/o Intra-attention features",
        {"no_intra_features": True},
    ),
    "no_self_features": (
        "w/o Self-attention features",
        {"no_self_features": True},
    ),
    "no_co_features": ("w/o Co-attention features", {"no_co_features": True}),
    "no_all_features": ("w/o All sentence features", {"no_all_features": True}),
}


def apply_preset(config: RunConfig, preset: str) -> RunConfig:
    """Return a copy of ``config`` with one named ablation preset applied.

    Every switch is reset first so presets are absolute, not cumulative.
    """
    if preset not in ABLATION_PRESETS:
        raise ConfigError(
            f"unknown ablation preset {preset!r}; known presets: "
            + ", ".join(ABLATION_PRESETS)
        )
    _, overrides = ABLATION_PRESETS[preset]
    reset = {name: False for name in (
        "no_encoder", "no_compare", "no_second_coattention",
        "no_intra_features", "no_self_features", "no_co_features",
        "no_all_features",
    )}
    reset.update(overrides)
    return config.model_copy(update=reset)
