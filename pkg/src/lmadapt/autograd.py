"""Dense 2-D tensors with tape-based reverse-mode differentiation.

The operation set is deliberately small: exactly what a gated recurrent
language model needs. Matrix product, elementwise arithmetic, the two gate
nonlinearities, a numerically stable row-wise log-softmax, row/element
gathers, slicing/stacking plumbing, and full reductions. Every operation
executed while a :class:`GradientTape` is active records a backward rule on
that tape; replaying the tape in reverse yields exact adjoints for any
tensors that fed the result.

Two precisions are supported. 64-bit is meant for verification (the
finite-difference oracle needs the headroom), 32-bit for experiment runs.
An operation never mixes precisions; construct all inputs with one dtype.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from .validation import ShapeError

DTYPES = {"fp32": np.dtype(np.float32), "fp64": np.dtype(np.float64)}


def resolve_dtype(precision: str) -> np.dtype:
    """Map a precision mode name ('fp32' or 'fp64') to a numpy dtype."""
    try:
        return DTYPES[precision]
    except KeyError:
        raise ValueError(f"precision must be one of {tuple(DTYPES)}, got {precision!r}") from None


class Tensor:
    """A dense matrix of 32- or 64-bit floats, stored row-major.

    One-dimensional input is treated as a single row. The wrapped array is
    exposed as ``.data``; in-place mutation of ``.data`` is allowed only
    between tapes (the SGD update does exactly that).
    """

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        arr = np.array(data, dtype=dtype, copy=True) if dtype is not None else np.array(data, copy=True)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got array of shape {arr.shape}")
        self.data = arr

    @classmethod
    def wrap(cls, arr: np.ndarray) -> "Tensor":
        """Wrap an existing 2-D array without copying."""
        t = cls.__new__(cls)
        t.data = arr
        return t

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a 1x1 tensor, got shape {self.shape}")
        return float(self.data[0, 0])

    def copy(self) -> "Tensor":
        return Tensor.wrap(self.data.copy())

    def astype(self, dtype) -> "Tensor":
        return Tensor.wrap(self.data.astype(dtype))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name})"


class GradientTape:
    """Ordered record of executed operations, replayable in reverse.

    Use as a context manager; operations run inside the ``with`` block are
    recorded. The tape holds strong references to every output tensor, so a
    tape's memory is released when the tape is dropped. Tapes do not nest
    semantics together: the innermost active tape records.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, Callable]] = []
        self._output_ids: set[int] = set()

    def __enter__(self) -> "GradientTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, out: Tensor, backward: Callable) -> None:
        self._records.append((out, backward))
        self._output_ids.add(id(out))

    def recorded(self, tensor: Tensor) -> bool:
        return id(tensor) in self._output_ids

    def gradients(self, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        return backward(self, loss, params)


_TAPE_STACK: list[GradientTape] = []


def _active_tape() -> GradientTape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def backward(tape: GradientTape, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Reverse-replay `tape` from the scalar `loss` node.

    Returns one gradient array per entry of `params`, aligned by position.
    Parameters that did not influence the loss get zero gradients. Each
    recorded operation is visited exactly once.
    """
    if loss.data.size != 1:
        raise ShapeError(f"loss must be a scalar (1x1) tensor, got shape {loss.shape}")
    if not tape.recorded(loss):
        raise ValueError("loss tensor was not produced by an operation recorded on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1), dtype=loss.dtype)}

    def accumulate(t: Tensor, g: np.ndarray) -> None:
        key = id(t)
        if key in grads:
            grads[key] += g
        else:
            grads[key] = g

    for out, rule in reversed(tape._records):
        g_out = grads.get(id(out))
        if g_out is None:
            continue
        rule(g_out, accumulate)

    return [grads.get(id(p), np.zeros_like(p.data)) for p in params]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _check_same_dtype(*tensors: Tensor) -> None:
    first = tensors[0].dtype
    for t in tensors[1:]:
        if t.dtype != first:
            raise ValueError(f"mixed precisions in one operation: {first} vs {t.dtype}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product a @ b."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    _check_same_dtype(a, b)
    out = Tensor.wrap(a.data @ b.data)
    tape = _active_tape()
    if tape is not None:
        a_data, b_data = a.data, b.data

        def rule(g, acc):
            acc(a, g @ b_data.T)
            acc(b, a_data.T @ g)

        tape._record(out, rule)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; `b` may be a single row broadcast over `a`'s rows."""
    broadcast = b.rows == 1 and a.rows > 1 and a.cols == b.cols
    if not broadcast and a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")
    _check_same_dtype(a, b)
    out = Tensor.wrap(a.data + b.data)
    tape = _active_tape()
    if tape is not None:

        def rule(g, acc):
            acc(a, g)
            acc(b, g.sum(axis=0, keepdims=True) if broadcast else g)

        tape._record(out, rule)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    _check_same_dtype(a, b)
    out = Tensor.wrap(a.data * b.data)
    tape = _active_tape()
    if tape is not None:
        a_data, b_data = a.data, b.data

        def rule(g, acc):
            acc(a, g * b_data)
            acc(b, g * a_data)

        tape._record(out, rule)
    return out


def scale(a: Tensor, k: float) -> Tensor:
    """Multiply all elements by the constant `k`."""
    k = a.dtype.type(k)
    out = Tensor.wrap(a.data * k)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, lambda g, acc: acc(a, g * k))
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = Tensor.wrap(expit(a.data))
    tape = _active_tape()
    if tape is not None:
        y = out.data

        def rule(g, acc):
            acc(a, g * y * (1.0 - y))

        tape._record(out, rule)
    return out


def tanh(a: Tensor) -> Tensor:
    out = Tensor.wrap(np.tanh(a.data))
    tape = _active_tape()
    if tape is not None:
        y = out.data

        def rule(g, acc):
            acc(a, g * (1.0 - y * y))

        tape._record(out, rule)
    return out


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log probabilities, computed with max subtraction.

    Each output row exponentiates and sums to 1 (within float tolerance);
    outputs are always <= 0.
    """
    if a.cols < 1:
        raise ShapeError("log_softmax: rows must contain at least one logit")
    with np.errstate(over="ignore", invalid="ignore"):
        shifted = a.data - a.data.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        out = Tensor.wrap(shifted - lse)
    tape = _active_tape()
    if tape is not None:
        logp = out.data

        def rule(g, acc):
            acc(a, g - np.exp(logp) * g.sum(axis=1, keepdims=True))

        tape._record(out, rule)
    return out


def transpose(a: Tensor) -> Tensor:
    out = Tensor.wrap(np.ascontiguousarray(a.data.T))
    tape = _active_tape()
    if tape is not None:
        tape._record(out, lambda g, acc: acc(a, np.ascontiguousarray(g.T)))
    return out


def take_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows of `a` by index; duplicates allowed (adjoints accumulate)."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise ShapeError("take_rows: indices must be a non-empty 1-D sequence")
    if idx.min() < 0 or idx.max() >= a.rows:
        raise IndexError(f"take_rows: index out of range for {a.rows} rows")
    out = Tensor.wrap(a.data[idx])
    tape = _active_tape()
    if tape is not None:

        def rule(g, acc):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            acc(a, full)

        tape._record(out, rule)
    return out


def take_items(a: Tensor, column_indices: Sequence[int]) -> Tensor:
    """Pick one element per row: out[i, 0] = a[i, column_indices[i]]."""
    idx = np.asarray(column_indices, dtype=np.intp)
    if idx.shape != (a.rows,):
        raise ShapeError(f"take_items: need exactly one column index per row, got {idx.shape} for {a.rows} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= a.cols):
        raise IndexError(f"take_items: column index out of range for {a.cols} columns")
    rows = np.arange(a.rows)
    out = Tensor.wrap(a.data[rows, idx].reshape(-1, 1))
    tape = _active_tape()
    if tape is not None:

        def rule(g, acc):
            full = np.zeros_like(a.data)
            np.add.at(full, (rows, idx), g[:, 0])
            acc(a, full)

        tape._record(out, rule)
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.cols):
        raise ShapeError(f"slice_cols: invalid range [{start}, {stop}) for {a.cols} columns")
    out = Tensor.wrap(a.data[:, start:stop].copy())
    tape = _active_tape()
    if tape is not None:

        def rule(g, acc):
            full = np.zeros_like(a.data)
            full[:, start:stop] = g
            acc(a, full)

        tape._record(out, rule)
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack tensors vertically; all parts must share a column count."""
    if not parts:
        raise ShapeError("concat_rows: need at least one part")
    cols = parts[0].cols
    for p in parts[1:]:
        if p.cols != cols:
            raise ShapeError(f"concat_rows: column mismatch {p.cols} vs {cols}")
    _check_same_dtype(*parts)
    out = Tensor.wrap(np.concatenate([p.data for p in parts], axis=0))
    tape = _active_tape()
    if tape is not None:
        offsets = np.cumsum([0] + [p.rows for p in parts])

        def rule(g, acc):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                acc(p, g[lo:hi])

        tape._record(out, rule)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.array([[a.data.sum()]]), dtype=a.dtype)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, lambda g, acc: acc(a, np.full_like(a.data, g[0, 0])))
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = Tensor(np.array([[a.data.mean()]]), dtype=a.dtype)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, lambda g, acc: acc(a, np.full_like(a.data, g[0, 0] / n)))
    return out


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


def finite_difference_grad(
    f: Callable[[], float],
    tensors: Iterable[Tensor],
    epsilon: float = 1e-5,
) -> list[np.ndarray]:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    `f` takes no arguments and must read the supplied tensors through shared
    references; each coordinate is perturbed in place by +/- epsilon and
    restored afterwards. Intended for 64-bit verification runs on small
    models. Rejects non-finite function values.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon!r}")
    grads = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            f_plus = f()
            flat[i] = original - epsilon
            f_minus = f()
            flat[i] = original
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError("finite_difference_grad: function returned a non-finite value")
            g[i] = (f_plus - f_minus) / (2.0 * epsilon)
        grads.append(g.reshape(t.shape))
    return grads
