"""Dense float64 matrices with reverse-mode differentiation on a tape.

The engine is deliberately small: rank-0/1/2 tensors, no broadcasting, and
a define-by-run ``Tape`` that records every primitive touching a trainable
tensor.  ``Tape.backward`` replays the records in reverse, so adjoints from
fanned-out values accumulate in a fixed order and identical inputs always
produce bit-identical gradients.

Matrix products and reductions delegate to numpy, whose evaluation order is
fixed for a given platform; at desk scale that keeps reruns bitwise
reproducible.
"""

from __future__ import annotations

from typing import Callable, Protocol, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "TapeError",
    "matmul",
    "add",
    "sub",
    "hadamard",
    "scale",
    "add_bias",
    "transpose",
    "sum_all",
    "map_unary",
    "softmax_cross_entropy",
    "zero_grad",
    "finite_difference_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class TapeError(RuntimeError):
    """Tape misuse: nested tapes, foreign roots, double backward, stale grads."""


class UnaryMap(Protocol):
    def value(self, x: np.ndarray) -> np.ndarray: ...

    def deriv(self, x: np.ndarray) -> np.ndarray: ...


_ACTIVE: "Tape | None" = None


class Tensor:
    """Row-major float64 array with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        # ascontiguousarray would promote rank 0 to rank 1; keep scalars 0-d.
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeError(f"tensors are rank 0..2, got shape {arr.shape}")
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Small conveniences; the module-level functions are the real API.
    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))


class Tape:
    """Ordered record of primitive ops for one forward pass.

    Inputs always precede the op that consumes them, and backward visits
    each record exactly once in reverse order.  A tape is a single-shot,
    single-threaded unit of work; build a fresh one per step.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._output_ids: set[int] = set()
        self._leaves: list[Tensor] = []
        self._leaf_ids: set[int] = set()
        self._ran = False

    def __enter__(self) -> "Tape":
        global _ACTIVE
        if _ACTIVE is not None:
            raise TapeError("another tape is already active")
        _ACTIVE = self
        return self

    def __exit__(self, *exc) -> bool:
        global _ACTIVE
        _ACTIVE = None
        return False

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], pull: Callable) -> None:
        out.node_id = len(self._records)
        for t in inputs:
            if t.requires_grad and id(t) not in self._output_ids and id(t) not in self._leaf_ids:
                self._leaf_ids.add(id(t))
                self._leaves.append(t)
        self._output_ids.add(id(out))
        self._records.append((out, inputs, pull))

    def backward(self, root: Tensor, accumulate: bool = False) -> None:
        """Populate .grad of every trainable leaf with d(root)/d(leaf).

        By default a leaf whose .grad is already set is an error (call
        ``zero_grad`` between steps); pass ``accumulate=True`` to add into
        existing buffers instead.
        """
        if root.data.size != 1:
            raise ShapeError(f"backward root must be a scalar, got shape {root.shape}")
        if id(root) not in self._output_ids:
            raise TapeError("backward root was not computed on this tape")
        if self._ran and not accumulate:
            raise TapeError("backward already ran on this tape; pass accumulate=True to rerun")

        flows: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        for out, inputs, pull in reversed(self._records):
            g = flows.pop(id(out), None)
            if g is None:
                continue
            for t, gt in zip(inputs, pull(g)):
                if gt is None or not t.requires_grad:
                    continue
                prev = flows.get(id(t))
                flows[id(t)] = gt if prev is None else prev + gt

        for leaf in self._leaves:
            g = flows.get(id(leaf))
            if g is None:
                g = np.zeros_like(leaf.data)
            if leaf.grad is None:
                leaf.grad = g
            elif accumulate:
                leaf.grad = leaf.grad + g
            else:
                raise TapeError(
                    "leaf gradient already populated; call zero_grad() first "
                    "or pass accumulate=True"
                )
        self._ran = True


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


def _emit(out: Tensor, inputs: tuple[Tensor, ...], pull: Callable) -> Tensor:
    if _ACTIVE is not None and out.requires_grad:
        _ACTIVE._record(out, inputs, pull)
    return out


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op} needs equal shapes, got {a.shape} and {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data, requires_grad=a.requires_grad or b.requires_grad)
    ad, bd = a.data, b.data

    def pull(g):
        return (
            g @ bd.T if a.requires_grad else None,
            ad.T @ g if b.requires_grad else None,
        )

    return _emit(out, (a, b), pull)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    out = Tensor(a.data + b.data, requires_grad=a.requires_grad or b.requires_grad)
    return _emit(out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    out = Tensor(a.data - b.data, requires_grad=a.requires_grad or b.requires_grad)
    return _emit(out, (a, b), lambda g: (g, -g))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("hadamard", a, b)
    out = Tensor(a.data * b.data, requires_grad=a.requires_grad or b.requires_grad)
    ad, bd = a.data, b.data
    return _emit(out, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c, requires_grad=a.requires_grad)
    return _emit(out, (a,), lambda g: (g * c,))


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    """Column-wise bias: a[d, n] + b[d] broadcast over columns."""
    if a.data.ndim != 2 or b.data.ndim != 1 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"add_bias needs (d, n) and (d,), got {a.shape} and {b.shape}")
    out = Tensor(a.data + b.data[:, None], requires_grad=a.requires_grad or b.requires_grad)
    return _emit(out, (a, b), lambda g: (g, g.sum(axis=1)))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a rank-2 operand, got {a.shape}")
    out = Tensor(a.data.T, requires_grad=a.requires_grad)
    return _emit(out, (a,), lambda g: (g.T,))


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.sum(a.data), requires_grad=a.requires_grad)
    shape = a.data.shape
    return _emit(out, (a,), lambda g: (np.full(shape, float(g)),))


def map_unary(x: Tensor, f: UnaryMap) -> Tensor:
    """Elementwise f(x); the local slope f'(x) is recorded at forward time."""
    out = Tensor(f.value(x.data), requires_grad=x.requires_grad)
    if out.requires_grad and _ACTIVE is not None:
        slope = f.deriv(x.data)
        return _emit(out, (x,), lambda g: (g * slope,))
    return out


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean NLL of rows of ``logits`` (n, C) against integer ``labels`` (n,).

    Uses the row-max-shifted log-sum-exp, so extreme logits stay finite.
    """
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy needs (n, C) logits, got {logits.shape}")
    y = np.asarray(labels)
    n, n_classes = logits.shape
    if y.ndim != 1 or y.shape[0] != n:
        raise ShapeError(f"labels must have shape ({n},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError("labels must be integer class indices")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"label out of range [0, {n_classes})")

    z = logits.data
    m = z.max(axis=1, keepdims=True)
    ez = np.exp(z - m)
    rows = np.arange(n)
    # Sum the off-max terms separately: log1p keeps the row LSE accurate
    # even when that mass is ~1e-9 of the max term.
    ez_rest = ez.copy()
    ez_rest[rows, z.argmax(axis=1)] = 0.0
    # nll_i = lse_i - z_label grouped as (m - z_label) + log1p(off-max mass):
    # when the label is the max, the difference is the tiny term alone.
    nll = (m[:, 0] - z[rows, y]) + np.log1p(ez_rest.sum(axis=1))
    out = Tensor(nll.sum() / n, requires_grad=logits.requires_grad)
    probs = ez / ez.sum(axis=1)[:, None]

    def pull(g):
        gz = probs.copy()
        gz[rows, y] -= 1.0
        return (gz * (float(g) / n),)

    return _emit(out, (logits,), pull)


def finite_difference_check(
    f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-4
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps one tensor to a scalar and must be buildable both on a tape
    (for the analytic gradient) and without one (for the probes).  Relative
    error per coordinate is |a - n| / max(1e-12, |a| + |n|).
    """
    if h <= 0:
        raise ValueError("finite difference step h must be positive")
    leaf = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        root = f(leaf)
    tape.backward(root)
    analytic = leaf.grad.reshape(-1)

    base = x.data.copy().reshape(-1)
    worst = 0.0
    for i in range(base.size):
        probe = base.copy()
        probe[i] += h
        fp = f(Tensor(probe.reshape(x.shape))).item()
        probe[i] -= 2.0 * h
        fm = f(Tensor(probe.reshape(x.shape))).item()
        numeric = (fp - fm) / (2.0 * h)
        err = abs(analytic[i] - numeric) / max(1e-12, abs(analytic[i]) + abs(numeric))
        worst = max(worst, err)
    return worst
