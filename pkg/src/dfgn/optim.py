"""Adam with L2 penalty and global gradient-norm clipping, plus checkpoints.

The update order is fixed: L2 penalty is added to the raw gradients, the
global norm is clipped, then the bias-corrected Adam step runs.  Frozen
word embeddings never appear in the parameter store, so they receive
neither penalty nor updates.

Checkpoint format (version 1, deterministic byte-for-byte):
  bytes 0-3   magic ``DFGN``
  bytes 4-7   format version, uint32 little-endian
  bytes 8-15  header length, uint64 little-endian
  header      JSON (sorted keys, UTF-8): config hash, full config, step,
              extra metadata, and an ``arrays`` list of
              {name, group in {param, adam_m, adam_v}, shape}
  payload     the arrays' float64 little-endian buffers, concatenated in
              header order
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig
from .errors import CheckpointError
from .model import ModelParams

MAGIC = b"DFGN"
FORMAT_VERSION = 1


@dataclass
class AdamState:
    """Per-parameter moment buffers and the shared hyperparameters."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    l2_lambda: float = 0.0
    clip_norm: float = 0.0  # 0 disables clipping
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_config(cls, config: RunConfig) -> "AdamState":
        return cls(
            lr=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            l2_lambda=config.l2_lambda,
            clip_norm=config.clip_norm,
        )

    def buffers_for(self, params: ModelParams) -> None:
        for name, t in params.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(t.data)
                self.v[name] = np.zeros_like(t.data)


def apply_l2(params: ModelParams, lam: float) -> None:
    """Add the gradient of lam * ||w||^2 to each parameter gradient in place."""
    if lam == 0.0:
        return
    for _, t in params.items():
        t.grad += 2.0 * lam * t.data


def global_grad_norm(params: ModelParams) -> float:
    total = 0.0
    for _, t in params.items():
        total += float(np.sum(t.grad * t.grad))
    return float(np.sqrt(total))


def clip_global_norm(params: ModelParams, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    norm = global_grad_norm(params)
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for _, t in params.items():
            t.grad *= scale
    return norm


def adam_step(state: AdamState, params: ModelParams) -> None:
    """One bias-corrected Adam update from the current gradients."""
    state.buffers_for(params)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, t in params.items():
        g = t.grad
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        t.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


def update(state: AdamState, params: ModelParams) -> float:
    """The full step in its fixed order: L2 -> clip -> Adam.

    Returns the pre-clip global gradient norm for logging.
    """
    apply_l2(params, state.l2_lambda)
    norm = clip_global_norm(params, state.clip_norm)
    adam_step(state, params)
    return norm


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    config: RunConfig
    config_hash: str
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    step: int
    extra: dict


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    state: Optional[AdamState],
    config: RunConfig,
    extra: Optional[dict] = None,
) -> None:
    arrays: list[tuple[str, str, np.ndarray]] = []
    for name, t in params.items():
        arrays.append((name, "param", t.data))
    if state is not None:
        for name in params.names():
            if name in state.m:
                arrays.append((name, "adam_m", state.m[name]))
                arrays.append((name, "adam_v", state.v[name]))
    header = {
        "format_version": FORMAT_VERSION,
        "config_hash": config.architecture_hash(),
        # the target path is not part of the run's identity; nulling it
        # keeps checkpoint bytes independent of where they are written
        "config": config.model_dump() | {"checkpoint_path": None},
        "step": state.step if state is not None else 0,
        "extra": extra or {},
        "arrays": [
            {"name": n, "group": g, "shape": list(a.shape)} for n, g, a in arrays
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<Q", len(blob))
    out += blob
    for _, _, a in arrays:
        out += np.ascontiguousarray(a, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path} has format version {version}, expected {FORMAT_VERSION}"
        )
    (header_len,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    offset = 16 + header_len
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += count * 8
        groups[entry["group"]][entry["name"]] = arr.copy()
    config = RunConfig.model_validate(header["config"])
    return Checkpoint(
        config=config,
        config_hash=header["config_hash"],
        params=groups["param"],
        adam_m=groups["adam_m"],
        adam_v=groups["adam_v"],
        step=header["step"],
        extra=header.get("extra", {}),
    )


def restore_params(checkpoint: Checkpoint, config: RunConfig) -> ModelParams:
    """Rebuild a parameter store from a checkpoint, verifying compatibility.

    The evaluating config must describe the same architecture that trained
    the checkpoint; paths, seeds, and training-only knobs may differ.
    """
    if config.architecture_hash() != checkpoint.config_hash:
        raise CheckpointError(
            "checkpoint architecture hash does not match the supplied config; "
            "refusing to load weights into a structurally different model"
        )
    fresh = ModelParams.initialize(checkpoint.config)
    if set(fresh.names()) != set(checkpoint.params):
        raise CheckpointError("checkpoint parameter names do not match the config")
    from .autodiff import Tensor

    tensors = {
        name: Tensor(checkpoint.params[name].copy(), requires_grad=True)
        for name in fresh.names()
    }
    return ModelParams(tensors, config.embedding_dim)
