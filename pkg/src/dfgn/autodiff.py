"""Dense float64 tensors with a reverse-mode gradient tape.

Every differentiable operation in the package is built from the ops in this
module.  Ops executed while a :class:`Tape` is active are recorded as
(inputs, output, backward-rule) records; ``Tape.backward`` replays the
records in reverse execution order and accumulates gradients into the
``grad`` buffers of the participating leaf tensors.  Ops executed with no
active tape (inference) record nothing and carry no gradient state.

All data is 64-bit, row-major and immutable after an op produces it; only
``grad`` buffers and optimizer-driven parameter updates mutate arrays.  A
tape is confined to a single thread; independent tapes over read-only
parameters may run concurrently.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, DegenerateMaskError, DimensionError

# Additive pre-exp surrogate for -inf in masked softmax / masked max.
MASK_FILL = 1e30

_tape_stack = threading.local()


class Tensor:
    """A dense float64 array, optionally tracked for gradients.

    ``grad`` is allocated (zero-filled) iff ``requires_grad`` is set at
    construction; op outputs track gradients through the active tape
    instead of owning a buffer.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = (
            np.zeros_like(self.data) if requires_grad else None
        )

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars go through the constant ops so they are not
    # treated as differentiable inputs.
    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other):
        if isinstance(other, Tensor):
            return elementwise(self, other, "add")
        return add_const(self, other)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return elementwise(self, other, "sub")
        return add_const(self, -other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return elementwise(self, other, "mul")
        return mul_const(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)


class _Record:
    """One executed op: output, inputs, and the rule mapping the output
    adjoint to per-input adjoint contributions (None for untracked inputs)."""

    __slots__ = ("output", "inputs", "backward")

    def __init__(self, output: Tensor, inputs: Sequence[Tensor], backward: Callable):
        self.output = output
        self.inputs = tuple(inputs)
        self.backward = backward


class Tape:
    """Ordered record of executed ops for one forward computation.

    Execution order is a topological order of the data flow, so replaying
    the records in reverse propagates adjoints correctly.  ``backward`` may
    be called repeatedly; each call re-walks the tape and adds into leaf
    ``grad`` buffers (gradients accumulate until ``zero_grad``).
    """

    def __init__(self):
        self._records: list[_Record] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_tape_stack, "stack", None)
        if stack is None:
            stack = _tape_stack.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tape_stack.stack.pop()

    @staticmethod
    def active() -> Optional["Tape"]:
        stack = getattr(_tape_stack, "stack", None)
        return stack[-1] if stack else None

    def __len__(self) -> int:
        return len(self._records)

    def record(self, output: Tensor, inputs: Sequence[Tensor], backward: Callable) -> None:
        self._records.append(_Record(output, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` for every leaf reachable from ``loss``."""
        if loss.data.size != 1:
            raise ContractError(
                f"backward requires a scalar loss, got shape {loss.data.shape}"
            )
        adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        holder: dict[int, Tensor] = {id(loss): loss}
        for rec in reversed(self._records):
            out_adj = adjoint.pop(id(rec.output), None)
            holder.pop(id(rec.output), None)
            if out_adj is None:
                continue
            for t, contrib in zip(rec.inputs, rec.backward(out_adj)):
                if contrib is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + contrib
                else:
                    adjoint[key] = contrib
                    holder[key] = t
        # Remaining entries were never produced by a record: they are leaves.
        for key, t in holder.items():
            if t.grad is not None:
                t.grad += adjoint[key].reshape(t.grad.shape)


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """Run reverse-mode accumulation on ``tape`` (default: the active tape)."""
    tape = tape or Tape.active()
    if tape is None:
        raise ContractError("backward called with no active tape")
    tape.backward(loss)


def _make(result: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap an op result; record it iff a tape is active and any input is tracked."""
    tape = Tape.active()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = result
    out.requires_grad = tracked
    out.grad = None
    if tracked:
        tape.record(out, inputs, backward_fn)
    return out


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 1-D operands behave as in ``np.matmul``."""
    if a.data.ndim == 0 or b.data.ndim == 0 or a.data.ndim > 2 or b.data.ndim > 2:
        raise DimensionError(
            f"matmul supports 1-D/2-D operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.data.shape} vs {b.data.shape}"
        )
    out = np.matmul(a.data, b.data)
    ad, bd = a.data, b.data

    def bw(g: np.ndarray):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return g @ bd.T, np.outer(ad, g)
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g * bd, g * ad  # 1-D dot product, scalar g

    return _make(out, (a, b), bw)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {x.data.shape}")
    return _make(np.ascontiguousarray(x.data.T), (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: tuple) -> Tensor:
    if int(np.prod(shape)) != x.data.size:
        raise DimensionError(f"cannot reshape {x.data.shape} to {shape}")
    old = x.data.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    """Pointwise add/sub/mul; ``b`` may be a vector along ``a``'s last axis."""
    if kind not in ("add", "sub", "mul"):
        raise ContractError(f"unknown elementwise kind {kind!r}")
    same = a.data.shape == b.data.shape
    last_axis_vec = (
        b.data.ndim == 1 and a.data.ndim >= 1 and b.data.shape[0] == a.data.shape[-1]
    )
    if not (same or last_axis_vec):
        raise DimensionError(
            f"elementwise {kind}: shapes {a.data.shape} and {b.data.shape} "
            "are neither identical nor last-axis broadcastable"
        )

    def reduce_to_b(g: np.ndarray) -> np.ndarray:
        if same:
            return g
        return g.reshape(-1, b.data.shape[0]).sum(axis=0)

    if kind == "add":
        out = a.data + b.data
        bw = lambda g: (g, reduce_to_b(g))
    elif kind == "sub":
        out = a.data - b.data
        bw = lambda g: (g, -reduce_to_b(g))
    else:
        ad, bd = a.data, b.data
        out = ad * bd
        bw = lambda g: (g * bd, reduce_to_b(g * ad))
    return _make(out, (a, b), bw)


def add_const(x: Tensor, c) -> Tensor:
    """Add a non-differentiable constant (scalar or broadcastable array)."""
    c = np.asarray(c, dtype=np.float64)
    return _make(x.data + c, (x,), lambda g: (g,))


def mul_const(x: Tensor, c) -> Tensor:
    """Multiply by a non-differentiable constant (scalar or broadcastable array)."""
    c = np.asarray(c, dtype=np.float64)
    return _make(x.data * c, (x,), lambda g: (g * c,))


def reduce(x: Tensor, kind: str, axis: Optional[int] = None) -> Tensor:
    """max/mean/sum reduction over ``axis`` (None: all elements).

    Max routes its gradient to the first-encountered argmax (lowest index on
    ties); mean distributes 1/n.
    """
    if kind not in ("max", "mean", "sum"):
        raise ContractError(f"unknown reduce kind {kind!r}")
    if axis is not None:
        if not (0 <= axis < x.data.ndim):
            raise DimensionError(
                f"reduce axis {axis} out of range for shape {x.data.shape}"
            )
        if x.data.shape[axis] == 0:
            raise DimensionError(f"reduce over empty axis {axis} of {x.data.shape}")
    elif x.data.size == 0:
        raise DimensionError("reduce over empty tensor")
    xd = x.data

    if kind == "sum":
        out = xd.sum(axis=axis)

        def bw(g):
            if axis is None:
                return (np.broadcast_to(g, xd.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), xd.shape).copy(),)

    elif kind == "mean":
        out = xd.mean(axis=axis)
        n = xd.size if axis is None else xd.shape[axis]

        def bw(g):
            if axis is None:
                return (np.broadcast_to(g / n, xd.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis) / n, xd.shape).copy(),)

    else:
        out = xd.max(axis=axis)

        def bw(g):
            dx = np.zeros_like(xd)
            if axis is None:
                dx.reshape(-1)[int(xd.argmax())] = float(np.asarray(g))
            else:
                idx = np.expand_dims(xd.argmax(axis=axis), axis)
                np.put_along_axis(dx, idx, np.expand_dims(g, axis), axis)
            return (dx,)

    return _make(np.asarray(out, dtype=np.float64), (x,), bw)


def softmax_masked(x: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax over ``axis`` restricted to unmasked positions.

    Masked positions output exactly 0; unmasked outputs are positive and sum
    to 1 per slice.  Stabilized by max-subtraction after an additive -1e30
    fill on masked positions.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.data.shape:
        raise DimensionError(
            f"softmax mask shape {mask.shape} != input shape {x.data.shape}"
        )
    if not mask.any(axis=axis).all():
        raise DegenerateMaskError("softmax slice with every position masked")
    z = x.data + (mask.astype(np.float64) - 1.0) * MASK_FILL
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z) * mask
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - inner),)

    return _make(p, (x,), bw)


def activation(x: Tensor, kind: str) -> Tensor:
    """Pointwise tanh / sigmoid / relu with exact derivative rules."""
    if kind == "tanh":
        y = np.tanh(x.data)
        bw = lambda g: (g * (1.0 - y * y),)
    elif kind == "sigmoid":
        y = 1.0 / (1.0 + np.exp(-x.data))
        bw = lambda g: (g * y * (1.0 - y),)
    elif kind == "relu":
        y = np.maximum(x.data, 0.0)
        pos = x.data > 0
        bw = lambda g: (g * pos,)
    else:
        raise ContractError(f"unknown activation kind {kind!r}")
    return _make(y, (x,), bw)


def log(x: Tensor) -> Tensor:
    """Natural log; caller guarantees strictly positive inputs."""
    xd = x.data
    return _make(np.log(xd), (x,), lambda g: (g / xd,))


def reciprocal(x: Tensor) -> Tensor:
    """1/x; caller guarantees nonzero inputs (add an epsilon upstream)."""
    y = 1.0 / x.data
    return _make(y, (x,), lambda g: (-g * y * y,))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate 1-D or 2-D tensors along ``axis``."""
    if not tensors:
        raise DimensionError("concat of zero tensors")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(
            np.take(g, range(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(sizes))
        )

    return _make(out, tuple(tensors), bw)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale kept by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return _make(x.data.copy(), (x,), lambda g: (g,))
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, window: int) -> Tensor:
    """Valid-position 1-D convolution over the row axis of ``x`` (len x d).

    ``weight`` is (window*d, F): each filter is applied to the flattened
    window of ``window`` consecutive rows.  Output is (len-window+1, F).
    """
    length, d = x.data.shape
    if window < 1 or length < window:
        raise DimensionError(
            f"conv1d window {window} invalid for input length {length}"
        )
    if weight.data.shape[0] != window * d:
        raise DimensionError(
            f"conv1d weight shape {weight.data.shape} != ({window * d}, F)"
        )
    n_pos = length - window + 1
    cols = np.lib.stride_tricks.sliding_window_view(x.data, window, axis=0)
    # sliding_window_view yields (n_pos, d, window); rearrange to rows of
    # flattened windows laid out row-major (position-major, then row, then dim).
    cols = np.ascontiguousarray(cols.transpose(0, 2, 1)).reshape(n_pos, window * d)
    out = cols @ weight.data + bias.data
    wd = weight.data

    def bw(g):
        dw = cols.T @ g
        db = g.sum(axis=0)
        gw = (g @ wd.T).reshape(n_pos, window, d)
        dx = np.zeros_like(x.data)
        for off in range(window):
            dx[off : off + n_pos] += gw[:, off, :]
        return dx, dw, db

    return _make(out, (x, weight, bias), bw)


def phi_filter(x: Tensor, y: Tensor, straight_through: bool = False) -> Tensor:
    """Cell-wise dynamic-threshold gate: keep x where x >= y, else 0.

    Backward: subgradient 1 through kept x cells, zero elsewhere; the
    threshold side receives no gradient (the comparison is a hard gate).
    With ``straight_through``, the threshold side instead receives the
    unit-slope surrogate -g*x, a deliberately biased estimator that lets
    the threshold parameters train.
    """
    if x.data.shape != y.data.shape:
        raise DimensionError(
            f"phi operands must share a shape, got {x.data.shape} and {y.data.shape}"
        )
    kept = x.data >= y.data
    out = np.where(kept, x.data, 0.0)
    xd = x.data

    def bw(g):
        dy = -g * xd if straight_through else None
        return g * kept, dy

    return _make(out, (x, y), bw)


# ---------------------------------------------------------------------------
# verification oracle
# ---------------------------------------------------------------------------


def finite_diff_check(
    f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5
) -> float:
    """Max relative error between autodiff and central-difference gradients.

    ``f`` must be a deterministic scalar-valued tensor function; inputs at
    relu/max kinks can exceed any tolerance, so callers sample away from
    kinks.  The denominator is max(|autodiff grad|, 1e-8) per element.
    """
    leaf = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(leaf)
        if out.data.size != 1:
            raise ContractError("finite_diff_check requires a scalar-valued f")
        tape.backward(out)
    grad = leaf.grad.copy()

    fd = np.zeros_like(grad)
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        up = f(Tensor(bumped.reshape(x.data.shape))).item()
        bumped[i] = flat[i] - h
        down = f(Tensor(bumped.reshape(x.data.shape))).item()
        fd.reshape(-1)[i] = (up - down) / (2.0 * h)

    denom = np.maximum(np.abs(grad), 1e-8)
    return float((np.abs(fd - grad) / denom).max())


def check_parameter_gradients(
    loss_fn: Callable[[], Tensor],
    params: Iterable[Tensor],
    h: float = 1e-5,
) -> float:
    """Central-difference check of a closure's gradient w.r.t. parameters.

    Runs one taped backward to collect autodiff gradients for every tensor
    in ``params``, then perturbs each parameter element in place and
    re-evaluates ``loss_fn`` tape-free.  ``loss_fn`` must be deterministic.
    Returns the max relative error (denominator max(|grad|, 1e-8)).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
        if loss.data.size != 1:
            raise ContractError("check_parameter_gradients requires a scalar loss")
        tape.backward(loss)
    grads = [p.grad.copy() for p in params]

    worst = 0.0
    for p, grad in zip(params, grads):
        flat = p.data.reshape(-1)
        fd = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            fd[i] = (up - down) / (2.0 * h)
        denom = np.maximum(np.abs(grad.reshape(-1)), 1e-8)
        worst = max(worst, float((np.abs(fd - grad.reshape(-1)) / denom).max()))
    return worst
