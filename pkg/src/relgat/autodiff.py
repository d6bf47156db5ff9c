"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tape records every differentiable operation in execution order (which is a
topological order by construction); Tape.backward replays the records in
reverse, accumulating gradients additively into each participating tensor.
Sparsity is handled exclusively through edge lists and the segment ops —
no n-by-n attention matrix is ever formed.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError, StructuralError

_ACTIVE_TAPE: "Tape | None" = None
_CHECK_FINITE = False


def set_check_finite(enabled: bool) -> bool:
    """Toggle per-op finiteness checks; returns the previous setting.

    Off by default: the sweep over every op output roughly doubles epoch
    cost. The training loop instead checks the loss each epoch and re-runs
    with checks on to locate a failure.
    """
    global _CHECK_FINITE
    previous = _CHECK_FINITE
    _CHECK_FINITE = enabled
    return previous


def _check(arr: np.ndarray, op_name: str) -> None:
    if _CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by {op_name}")


class Tape:
    """Ordered record of operations for one forward/backward cycle."""

    def __init__(self):
        self._ops = []
        self._watched = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ConfigError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def watch(self, *tensors: "Tensor") -> None:
        """Guarantee the given tensors receive a grad buffer on backward,
        even if no recorded op touched them (unused-parameter case)."""
        self._watched.extend(tensors)

    def record(self, backward_fn) -> None:
        self._ops.append(backward_fn)

    def backward(self, loss: "Tensor") -> None:
        """Populate .grad on every requires_grad tensor reachable from loss.

        Gradients accumulate additively for tensors used multiple times.
        The tape is cleared afterwards.
        """
        if loss.data.shape != ():
            raise ConfigError(
                f"backward requires a scalar loss, got shape {loss.data.shape}"
            )
        if not self._ops:
            raise ConfigError("backward on an empty tape")
        loss.grad = np.ones((), dtype=np.float64)
        for op in reversed(self._ops):
            op()
        for t in self._watched:
            if t.requires_grad and t.grad is None:
                t.grad = np.zeros_like(t.data)
        if _CHECK_FINITE:
            for t in self._watched:
                if t.grad is not None:
                    _check(t.grad, "backward(grad)")
        self.clear()

    def clear(self) -> None:
        self._ops.clear()
        self._watched.clear()

    def __len__(self) -> int:
        return len(self._ops)


class Tensor:
    """Dense float64 array with an optional gradient slot.

    `tape` is the provenance handle: set on tensors produced while a tape is
    active, None on leaves.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None

    @property
    def shape(self):
        return self.data.shape

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return subtract(self, other)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(self, other)

    def __neg__(self):
        return multiply(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _result(data: np.ndarray, op_name: str, inputs, backward_fn) -> Tensor:
    """Wrap op output; record the backward rule if a tape is active and any
    input participates in differentiation."""
    _check(data, op_name)
    out = Tensor(data)
    tape = _ACTIVE_TAPE
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.tape = tape
        tape.record(backward_fn(out))
    return out


def _as_operands(a, b, op_name: str):
    """Coerce (tensor, tensor|scalar); only scalar-with-tensor broadcast is allowed."""
    if not isinstance(a, Tensor):
        raise ConfigError(f"{op_name}: first operand must be a Tensor")
    if isinstance(b, Tensor):
        if a.data.shape != b.data.shape:
            raise ConfigError(
                f"{op_name}: shape mismatch {a.data.shape} vs {b.data.shape}"
            )
        return a, b, None
    return a, None, float(b)


# ---------------------------------------------------------------------------
# elementwise and matrix ops


def add(a, b) -> Tensor:
    a, bt, scalar = _as_operands(a, b, "add")
    if bt is None:
        data = a.data + scalar

        def bwd(out):
            def fn():
                if a.requires_grad:
                    a.accumulate_grad(out.grad)

            return fn

        return _result(data, "add", (a,), bwd)
    data = a.data + bt.data

    def bwd(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad)
            if bt.requires_grad:
                bt.accumulate_grad(out.grad)

        return fn

    return _result(data, "add", (a, bt), bwd)


def subtract(a, b) -> Tensor:
    a, bt, scalar = _as_operands(a, b, "subtract")
    if bt is None:
        data = a.data - scalar

        def bwd(out):
            def fn():
                if a.requires_grad:
                    a.accumulate_grad(out.grad)

            return fn

        return _result(data, "subtract", (a,), bwd)
    data = a.data - bt.data

    def bwd(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad)
            if bt.requires_grad:
                bt.accumulate_grad(-out.grad)

        return fn

    return _result(data, "subtract", (a, bt), bwd)


def multiply(a, b) -> Tensor:
    a, bt, scalar = _as_operands(a, b, "multiply")
    if bt is None:
        data = a.data * scalar

        def bwd(out):
            def fn():
                if a.requires_grad:
                    a.accumulate_grad(out.grad * scalar)

            return fn

        return _result(data, "multiply", (a,), bwd)
    data = a.data * bt.data

    def bwd(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * bt.data)
            if bt.requires_grad:
                bt.accumulate_grad(out.grad * a.data)

        return fn

    return _result(data, "multiply", (a, bt), bwd)


def absolute(a: Tensor) -> Tensor:
    """Elementwise |a|; backward uses the subgradient 0 at 0."""
    data = np.abs(a.data)

    def bwd(out):
        sign = np.sign(a.data)

        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * sign)

        return fn

    return _result(data, "absolute", (a,), bwd)


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate along the last axis."""
    tensors = list(tensors)
    if not tensors:
        raise ConfigError("concat: need at least one tensor")
    if axis not in (-1, tensors[0].data.ndim - 1):
        raise ConfigError("concat: only the last axis is supported")
    data = np.concatenate([t.data for t in tensors], axis=-1)
    widths = [t.data.shape[-1] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def bwd(out):
        def fn():
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    t.accumulate_grad(out.grad[..., lo:hi])

        return fn

    return _result(data, "concat", tensors, bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports 2d@2d, 2d@1d and 1d@2d like numpy."""
    an, bn = a.data.ndim, b.data.ndim
    if (an, bn) not in ((2, 2), (2, 1), (1, 2)):
        raise ConfigError(f"matmul: unsupported ranks {an} and {bn}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ConfigError(
            f"matmul: shape mismatch {a.data.shape} vs {b.data.shape}"
        )
    data = a.data @ b.data

    def bwd(out):
        def fn():
            g = out.grad
            if an == 2 and bn == 2:
                if a.requires_grad:
                    a.accumulate_grad(g @ b.data.T)
                if b.requires_grad:
                    b.accumulate_grad(a.data.T @ g)
            elif an == 2 and bn == 1:
                if a.requires_grad:
                    a.accumulate_grad(np.outer(g, b.data))
                if b.requires_grad:
                    b.accumulate_grad(a.data.T @ g)
            else:  # 1d @ 2d
                if a.requires_grad:
                    a.accumulate_grad(b.data @ g)
                if b.requires_grad:
                    b.accumulate_grad(np.outer(a.data, g))

        return fn

    return _result(data, "matmul", (a, b), bwd)


def linear(x: Tensor, w: Tensor) -> Tensor:
    """x @ w.T for x (n, d_in) and a weight matrix w (d_out, d_in)."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ConfigError(
            f"linear: expected 2-D operands, got {x.data.shape} and {w.data.shape}"
        )
    if x.data.shape[1] != w.data.shape[1]:
        raise ConfigError(
            f"linear: shape mismatch {x.data.shape} vs {w.data.shape}"
        )
    data = x.data @ w.data.T

    def bwd(out):
        def fn():
            g = out.grad
            if x.requires_grad:
                x.accumulate_grad(g @ w.data)
            if w.requires_grad:
                w.accumulate_grad(g.T @ x.data)

        return fn

    return _result(data, "linear", (x, w), bwd)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    data = np.where(a.data > 0, a.data, slope * a.data)

    def bwd(out):
        grad_mask = np.where(a.data > 0, 1.0, slope)

        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * grad_mask)

        return fn

    return _result(data, "leaky_relu", (a,), bwd)


def elu(a: Tensor) -> Tensor:
    data = np.where(a.data > 0, a.data, np.expm1(a.data))

    def bwd(out):
        grad_mask = np.where(a.data > 0, 1.0, np.exp(np.minimum(a.data, 0.0)))

        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * grad_mask)

        return fn

    return _result(data, "elu", (a,), bwd)


def dropout(a: Tensor, rate: float, training: bool, rng) -> Tensor:
    """Inverted dropout: surviving entries scaled by 1/(1-rate) at train time,
    so inference is a plain forward pass. Identity when not training or rate=0
    (the same tensor is returned, and the rng is not consumed)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout: rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    data = a.data * mask

    def bwd(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * mask)

        return fn

    return _result(data, "dropout", (a,), bwd)


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log-softmax of a 2-D tensor, max-shifted for stability."""
    if a.data.ndim != 2:
        raise ConfigError(f"log_softmax: expected 2-D rows, got shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    data = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def bwd(out):
        softmax = np.exp(data)

        def fn():
            if a.requires_grad:
                g = out.grad
                a.accumulate_grad(g - softmax * g.sum(axis=1, keepdims=True))

        return fn

    return _result(data, "log_softmax", (a,), bwd)


# ---------------------------------------------------------------------------
# indexing / reduction plumbing


def _as_index(idx, n: int, op_name: str) -> np.ndarray:
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise StructuralError(f"{op_name}: index out of range [0, {n})")
    return idx


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows (or 1-D entries) of a; backward scatter-adds."""
    idx = _as_index(idx, a.data.shape[0], "take_rows")
    data = a.data[idx]

    def bwd(out):
        def fn():
            if a.requires_grad:
                g = out.grad
                if g.ndim == 1:
                    a.accumulate_grad(
                        _kernels.scatter_add_vec(g, idx, a.data.shape[0])
                    )
                else:
                    a.accumulate_grad(
                        _kernels.scatter_add_rows(g, idx, a.data.shape[0])
                    )

        return fn

    return _result(data, "take_rows", (a,), bwd)


def pick(a: Tensor, cols) -> Tensor:
    """out[i] = a[i, cols[i]] for a 2-D tensor."""
    if a.data.ndim != 2:
        raise ConfigError(f"pick: expected 2-D input, got shape {a.data.shape}")
    cols = _as_index(cols, a.data.shape[1], "pick")
    if cols.shape[0] != a.data.shape[0]:
        raise ConfigError(
            f"pick: need one column per row, got {cols.shape[0]} for {a.data.shape[0]} rows"
        )
    rows = np.arange(a.data.shape[0])
    data = a.data[rows, cols]

    def bwd(out):
        def fn():
            if a.requires_grad:
                g = np.zeros_like(a.data)
                g[rows, cols] = out.grad
                a.accumulate_grad(g)

        return fn

    return _result(data, "pick", (a,), bwd)


def slice_1d(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice of a 1-D tensor."""
    if a.data.ndim != 1:
        raise ConfigError(f"slice_1d: expected 1-D input, got shape {a.data.shape}")
    data = a.data[start:stop].copy()

    def bwd(out):
        def fn():
            if a.requires_grad:
                g = np.zeros_like(a.data)
                g[start:stop] = out.grad
                a.accumulate_grad(g)

        return fn

    return _result(data, "slice_1d", (a,), bwd)


def scale_rows(values: Tensor, scale: Tensor) -> Tensor:
    """Multiply row i of `values` by scale[i]."""
    if values.data.ndim != 2 or scale.data.ndim != 1:
        raise ConfigError(
            f"scale_rows: expected (E, d) and (E,), got {values.data.shape} and {scale.data.shape}"
        )
    if values.data.shape[0] != scale.data.shape[0]:
        raise ConfigError(
            f"scale_rows: row count mismatch {values.data.shape} vs {scale.data.shape}"
        )
    data = values.data * scale.data[:, None]

    def bwd(out):
        def fn():
            g = out.grad
            if values.requires_grad:
                values.accumulate_grad(g * scale.data[:, None])
            if scale.requires_grad:
                scale.accumulate_grad((g * values.data).sum(axis=1))

        return fn

    return _result(data, "scale_rows", (values, scale), bwd)


def sum_all(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum())

    def bwd(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(np.full_like(a.data, out.grad))

        return fn

    return _result(data, "sum_all", (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    size = a.data.size
    data = np.asarray(a.data.mean())

    def bwd(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(np.full_like(a.data, out.grad / size))

        return fn

    return _result(data, "mean_all", (a,), bwd)


# ---------------------------------------------------------------------------
# segment ops (sparse per-edge attention support)


def segment_sum(values: Tensor, segments, n: int) -> Tensor:
    """Row i of the output is the sum of value rows whose segment == i;
    rows with no entries are zero."""
    segments = _as_index(segments, n, "segment_sum")
    if segments.shape[0] != values.data.shape[0]:
        raise ConfigError(
            f"segment_sum: one segment per row required, got {segments.shape[0]} "
            f"for {values.data.shape[0]} rows"
        )
    if values.data.ndim == 1:
        data = _kernels.scatter_add_vec(values.data, segments, n)
    else:
        data = _kernels.scatter_add_rows(values.data, segments, n)

    def bwd(out):
        def fn():
            if values.requires_grad:
                values.accumulate_grad(out.grad[segments])

        return fn

    return _result(data, "segment_sum", (values,), bwd)


def segment_softmax(scores: Tensor, segments, n: int) -> Tensor:
    """Softmax within each segment, stabilised by the per-segment maximum.

    Every node in [0, n) must own at least one entry (guaranteed upstream by
    self-loops); an empty segment is a structural error.
    """
    if scores.data.ndim != 1:
        raise ConfigError(
            f"segment_softmax: expected 1-D scores, got shape {scores.data.shape}"
        )
    segments = _as_index(segments, n, "segment_softmax")
    if segments.shape[0] != scores.data.shape[0]:
        raise ConfigError(
            f"segment_softmax: one segment per score required, got "
            f"{segments.shape[0]} for {scores.data.shape[0]} scores"
        )
    counts = np.bincount(segments, minlength=n)
    if np.any(counts == 0):
        missing = int(np.argmin(counts))
        raise StructuralError(
            f"segment_softmax: aggregation target {missing} has no entries "
            "(self-loops missing?)"
        )
    seg_max = _kernels.segment_max(scores.data, segments, n)
    exp = np.exp(scores.data - seg_max[segments])
    denom = _kernels.scatter_add_vec(exp, segments, n)
    data = exp / denom[segments]

    def bwd(out):
        def fn():
            if scores.requires_grad:
                g = out.grad
                weighted = _kernels.scatter_add_vec(g * data, segments, n)
                scores.accumulate_grad(data * (g - weighted[segments]))

        return fn

    return _result(data, "segment_softmax", (scores,), bwd)


def relation_scores(h: Tensor, src, dst, w: Tensor, kind_code: int) -> Tensor:
    """Per-edge score contribution rel(h[dst], h[src]) . w, streamed over
    edges without materialising the (E, d) relation matrix."""
    n = h.data.shape[0]
    src = _as_index(src, n, "relation_scores")
    dst = _as_index(dst, n, "relation_scores")
    if src.shape[0] != dst.shape[0]:
        raise ConfigError(
            f"relation_scores: src/dst length mismatch {src.shape[0]} vs {dst.shape[0]}"
        )
    r = 2 if kind_code == _kernels.KIND_ABSDIFF_PROD else 1
    if w.data.shape != (r * h.data.shape[1],):
        raise ConfigError(
            f"relation_scores: weight shape {w.data.shape} does not match "
            f"relation width {r * h.data.shape[1]}"
        )
    data = _kernels.relation_scores_forward(h.data, src, dst, w.data, kind_code)

    def bwd(out):
        def fn():
            grad_h, grad_w = _kernels.relation_scores_backward(
                h.data, src, dst, w.data, kind_code, out.grad
            )
            if h.requires_grad:
                h.accumulate_grad(grad_h)
            if w.requires_grad:
                w.accumulate_grad(grad_w)

        return fn

    return _result(data, "relation_scores", (h, w), bwd)


def pairnorm(a: Tensor, scale: float = 1.0):
    """Centre columns, then rescale so the mean squared row norm equals
    scale**2. Returns (tensor, degenerate): if the centred matrix is all
    zero the output is zeros and degenerate is True (no exception raised).
    """
    if a.data.ndim != 2:
        raise ConfigError(f"pairnorm: expected 2-D input, got shape {a.data.shape}")
    n = a.data.shape[0]
    centered = a.data - a.data.mean(axis=0, keepdims=True)
    sq = float((centered * centered).sum())
    if sq == 0.0:
        out = _result(
            np.zeros_like(a.data),
            "pairnorm",
            (a,),
            lambda out: (lambda: None),
        )
        return out, True
    root = np.sqrt(sq / n)  # sqrt(mean_i ||centered_i||^2)
    data = (scale / root) * centered

    def bwd(out):
        def fn():
            if a.requires_grad:
                g = out.grad
                inner = float((g * centered).sum())
                d_centered = (scale / root) * g - (
                    scale / (n * root**3)
                ) * inner * centered
                a.accumulate_grad(d_centered - d_centered.mean(axis=0, keepdims=True))

        return fn

    return _result(data, "pairnorm", (a,), bwd), False
