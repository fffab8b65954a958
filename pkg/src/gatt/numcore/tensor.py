"""Dense float64 tensors and a reverse-mode tape.

A :class:`Tensor` wraps a numpy array of rank 0, 1 or 2.  Tensors created by
an op whose inputs require gradients are appended to the owning
:class:`Tape`; since every node is recorded after its inputs, the recording
order is already a topological order and ``Tape.backward`` just walks it in
reverse.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DegenerateMaskError(ValueError):
    """A softmax row has no active position."""


class NumericError(ArithmeticError):
    """A tensor holds NaN or Inf."""


class Tensor:
    __slots__ = ("data", "grad", "tape", "_backward", "name")
    # make numpy defer to our operators in mixed expressions
    __array_ufunc__ = None

    def __init__(self, data, tape: Optional["Tape"] = None, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise DimensionError(f"rank {arr.ndim} tensors are not supported")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.tape = tape
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def requires_grad(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def check_finite(self) -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            label = self.name or "tensor"
            raise NumericError(f"{label} contains non-finite values")
        return self

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Records differentiable ops in execution order."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.leaves: dict[str, Tensor] = {}

    def leaf(self, value: np.ndarray, name: str | None = None) -> Tensor:
        t = Tensor(value, tape=self, name=name)
        if name is not None:
            self.leaves[name] = t
        return t

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1 or loss.data.ndim != 0:
            raise DimensionError(f"loss must be a scalar, got shape {loss.shape}")
        if loss.tape is not self:
            raise ValueError("loss was not recorded on this tape")
        loss.grad = np.ones((), dtype=np.float64)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)

    def __len__(self) -> int:
        return len(self.nodes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*tensors: Tensor) -> Optional[Tape]:
    for t in tensors:
        if t.tape is not None:
            return t.tape
    return None


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.tape is None:
        return
    t.grad = g if t.grad is None else t.grad + g


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    tape = _tape_of(*inputs)
    out = Tensor(data, tape=tape)
    if tape is not None:
        out._backward = backward
        tape.nodes.append(out)
    return out


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Undo numpy broadcasting by summing ``g`` down to ``shape``."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def backward(g):
        _accum(a, _sum_to(g, a.shape))
        _accum(b, _sum_to(g, b.shape))

    return _result(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def backward(g):
        _accum(a, _sum_to(g, a.shape))
        _accum(b, -_sum_to(g, b.shape))

    return _result(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def backward(g):
        if a.tape is not None:
            _accum(a, _sum_to(g * b.data, a.shape))
        if b.tape is not None:
            _accum(b, _sum_to(g * a.data, b.shape))

    return _result(data, (a, b), backward)


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g):
        _accum(x, g * y * (1.0 - y))

    return _result(y, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        _accum(x, g * (1.0 - y * y))

    return _result(y, (x,), backward)


def one_minus(x: Tensor) -> Tensor:
    def backward(g):
        _accum(x, -g)

    return _result(1.0 - x.data, (x,), backward)


# -- linear algebra ------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim == 0 or b.data.ndim == 0 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        ad, bd = a.data, b.data
        if a.tape is not None:
            if bd.ndim == 1:
                ga = np.multiply.outer(g, bd)
            else:
                ga = g @ bd.T
            _accum(a, ga)
        if b.tape is not None:
            gb = np.multiply.outer(ad, g) if ad.ndim == 1 else ad.T @ g
            _accum(b, gb)

    return _result(data, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Row-wise affine map ``x @ w.T + b`` for ``w`` of shape (out, in)."""
    if w.data.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise DimensionError(f"linear: input {x.shape} vs weight {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise DimensionError(f"linear: bias {b.shape} vs weight {w.shape}")
    data = x.data @ w.data.T
    if b is not None:
        data = data + b.data
    inputs = (x, w) if b is None else (x, w, b)

    def backward(g):
        if x.tape is not None:
            _accum(x, g @ w.data)
        if w.tape is not None:
            if g.ndim == 1:
                _accum(w, np.multiply.outer(g, x.data))
            else:
                _accum(w, g.T @ x.data)
        if b is not None and b.tape is not None:
            _accum(b, g if g.ndim == 1 else g.sum(axis=0))

    return _result(data, inputs, backward)


# -- shape ops -----------------------------------------------------------------


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    data = x.data.reshape(shape)
    if data.ndim > 2:
        raise DimensionError("reshape target rank exceeds 2")

    def backward(g):
        _accum(x, g.reshape(old))

    return _result(data, (x,), backward)


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        for p, gp in zip(parts, np.split(g, sizes, axis=axis)):
            _accum(p, gp)

    return _result(data, tuple(parts), backward)


def take_rows(x: Tensor, index) -> Tensor:
    """Gather rows (or entries of a vector) by integer index."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise IndexError(f"row index out of range for {x.shape[0]} rows")
    data = x.data[index]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        _accum(x, full)

    return _result(data, (x,), backward)


def repeat_rows(x: Tensor, n: int) -> Tensor:
    """(B, d) -> (B*n, d) with each row repeated ``n`` times consecutively."""
    data = np.repeat(x.data, n, axis=0)

    def backward(g):
        _accum(x, g.reshape((x.shape[0], n) + x.shape[1:]).sum(axis=1))

    return _result(data, (x,), backward)


def group_sum(x: Tensor, n: int) -> Tensor:
    """(B*n, d) -> (B, d) summing consecutive groups of ``n`` rows."""
    rows = x.shape[0]
    if rows % n:
        raise DimensionError(f"{rows} rows do not split into groups of {n}")
    data = x.data.reshape((rows // n, n) + x.shape[1:]).sum(axis=1)

    def backward(g):
        _accum(x, np.repeat(g, n, axis=0))

    return _result(data, (x,), backward)


def interleave(steps: list[Tensor]) -> Tensor:
    """Stack per-step (B, d) tensors into (B*n, d), row ``b*n + t``."""
    n = len(steps)
    stacked = np.stack([s.data for s in steps], axis=1)
    b, d = stacked.shape[0], stacked.shape[2]
    data = stacked.reshape(b * n, d)

    def backward(g):
        g3 = g.reshape(b, n, d)
        for t, s in enumerate(steps):
            _accum(s, g3[:, t, :])

    return _result(data, tuple(steps), backward)


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape

    def backward(g):
        _accum(x, np.broadcast_to(g, shape).copy())

    return _result(np.asarray(x.data.sum()), (x,), backward)


# -- normalisation and losses --------------------------------------------------


def masked_softmax(scores: Tensor, mask=None) -> Tensor:
    """Softmax along the last axis restricted to positions where ``mask`` is 1.

    Masked positions get exactly zero weight.  Every row must have at least
    one active position.
    """
    s = scores.data
    m = np.ones_like(s, dtype=bool) if mask is None else np.asarray(mask).astype(bool)
    if m.shape != s.shape:
        raise DimensionError(f"mask shape {m.shape} vs scores {s.shape}")
    if not np.all(m.any(axis=-1)):
        raise DegenerateMaskError("softmax row with every position masked")
    shifted = np.where(m, s, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(m, np.exp(shifted), 0.0)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accum(scores, y * (g - dot))

    return _result(y, (scores,), backward)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def nll(logits: Tensor, targets, weights=None) -> Tensor:
    """Summed negative log-likelihood of ``targets`` under row-wise softmax.

    ``weights`` (one per row, typically the target mask) scales each row's
    contribution; rows with weight 0 contribute nothing.
    """
    targets = np.asarray(targets, dtype=np.int64)
    rows = np.arange(logits.shape[0])
    w = np.ones(logits.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    logp = log_softmax(logits.data)
    loss = -(w * logp[rows, targets]).sum()

    def backward(g):
        p = np.exp(logp)
        p[rows, targets] -= 1.0
        _accum(logits, g * w[:, None] * p)

    return _result(np.asarray(loss), (logits,), backward)
