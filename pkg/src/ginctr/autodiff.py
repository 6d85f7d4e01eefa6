"""Minimal reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every primitive op in execution order. Parameters
enter as leaves via :meth:`Tape.param`; arrays that are not on a tape are
treated as constants. :func:`backward` walks the tape in reverse and returns
the gradient of a scalar loss with respect to every leaf.

There is no broadcasting: ops that combine a matrix with a vector (the bias
in :func:`affine`, the weights in :func:`scale_rows`) say so in their name
and signature. Variable-size groups (a node's neighbors, a user's clicks)
are handled with :class:`Segments` and the ``segment_*`` ops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    pass


class Tensor:
    """A value, plus where it came from if it was recorded on a tape."""

    __slots__ = ("value", "tape", "parents", "backward_fn", "name")

    def __init__(self, value, tape=None, parents=(), backward_fn=None, name=None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.tape = tape
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float("nan")

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"


class Tape:
    """Append-only record of ops; rebuilt for every forward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.leaves: list[Tensor] = []

    def param(self, value, name: str | None = None) -> Tensor:
        t = Tensor(np.array(value, dtype=DTYPE), self, name=name)
        self.leaves.append(t)
        return t

    def record(self, value, parents: Sequence[Tensor], backward_fn) -> Tensor:
        """Append an op node. ``backward_fn(g)`` returns one gradient per parent."""
        t = Tensor(value, self, tuple(parents), backward_fn)
        self.nodes.append(t)
        return t

    def __len__(self):
        return len(self.nodes)


def constant(value) -> Tensor:
    return Tensor(value)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(value, parents: Sequence[Tensor], backward_fn) -> Tensor:
    for p in parents:
        if p.tape is not None:
            return p.tape.record(value, parents, backward_fn)
    return Tensor(value)


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Gradients of scalar ``loss`` w.r.t. every leaf parameter on ``tape``.

    Leaves the loss does not depend on get a zero gradient.
    """
    if loss.value.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    if loss.tape is not tape:
        raise ValueError("loss was not recorded on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, gp in zip(node.parents, node.backward_fn(g)):
            if gp is None or parent.tape is not tape:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + gp
            else:
                grads[key] = gp
    return {leaf: grads.get(id(leaf), np.zeros_like(leaf.value)) for leaf in tape.leaves}


# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    return _op(a.value + b.value, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")
    av, bv = a.value, b.value
    return _op(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    return _op(a.value * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is 0."""
    x = _as_tensor(x)
    mask = x.value > 0
    return _op(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    v = x.value
    # split by sign so exp never overflows
    e = np.exp(-np.abs(v))
    y = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _op(y, (x,), lambda g: (g * y * (1.0 - y),))


# linear algebra


def affine(W: Tensor, x: Tensor, b: Tensor | None = None) -> Tensor:
    """``W x + b`` for a vector ``x``; for a matrix ``x`` each row is mapped.

    ``W`` is ``[m, n]``; ``x`` is ``[n]`` or ``[r, n]``; ``b`` is ``[m]``.
    """
    W, x = _as_tensor(W), _as_tensor(x)
    if W.value.ndim != 2:
        raise ShapeError(f"affine: W must be a matrix, got {W.shape}")
    m, n = W.shape
    if x.value.ndim not in (1, 2) or x.shape[-1] != n:
        raise ShapeError(f"affine: W {W.shape} does not conform with x {x.shape}")
    if b is not None:
        b = _as_tensor(b)
        if b.shape != (m,):
            raise ShapeError(f"affine: bias {b.shape}, expected ({m},)")
    Wv, xv = W.value, x.value
    if xv.ndim == 1:
        out = Wv @ xv
    else:
        out = xv @ Wv.T
    if b is not None:
        out = out + b.value

    def grad(g):
        if xv.ndim == 1:
            gW, gx, gb = np.outer(g, xv), Wv.T @ g, g
        else:
            gW, gx, gb = g.T @ xv, g @ Wv, g.sum(axis=0)
        return (gW, gx, gb) if b is not None else (gW, gx)

    parents = (W, x, b) if b is not None else (W, x)
    return _op(out, parents, grad)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two vectors, as a shape-``()`` scalar."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: {a.shape} vs {b.shape}")
    av, bv = a.value, b.value
    return _op(np.dot(av, bv), (a, b), lambda g: (g * bv, g * av))


def rowdot(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise inner products of two ``[r, d]`` matrices -> ``[r]``."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"rowdot: {a.shape} vs {b.shape}")
    av, bv = a.value, b.value
    return _op(np.einsum("ij,ij->i", av, bv), (a, b), lambda g: (g[:, None] * bv, g[:, None] * av))


def scale_rows(x: Tensor, w: Tensor) -> Tensor:
    """Multiply row ``i`` of ``x`` ``[r, d]`` by ``w[i]``."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.value.ndim != 2 or w.shape != (x.shape[0],):
        raise ShapeError(f"scale_rows: {x.shape} vs {w.shape}")
    xv, wv = x.value, w.value
    return _op(xv * wv[:, None], (x, w), lambda g: (g * wv[:, None], np.einsum("ij,ij->i", g, xv)))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along ``axis`` (the last axis by default)."""
    if not parts:
        raise ShapeError("concat: empty parts list")
    parts = tuple(_as_tensor(p) for p in parts)
    ax = axis % parts[0].value.ndim
    sizes = [p.shape[ax] for p in parts]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([p.value for p in parts], axis=ax)
    return _op(out, parts, lambda g: tuple(np.split(g, bounds, axis=ax)))


def stack(vectors: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors into the rows of a matrix."""
    if not vectors:
        raise ShapeError("stack: empty list")
    vectors = tuple(_as_tensor(v) for v in vectors)
    shape = vectors[0].shape
    if len(shape) != 1 or any(v.shape != shape for v in vectors):
        raise ShapeError("stack: vectors must share one 1-D shape")
    out = np.stack([v.value for v in vectors])
    return _op(out, vectors, lambda g: tuple(g))


def gather(x: Tensor, rows) -> Tensor:
    """Select rows of ``x``; gradients scatter-add back to the selected rows."""
    x = _as_tensor(x)
    idx = np.asarray(rows, dtype=np.intp)
    shape = x.shape

    def grad(g):
        out = np.zeros(shape, dtype=DTYPE)
        if idx.ndim == 0:
            out[idx] += g
        elif idx.size:
            out[idx_unique] = np.add.reduceat(g[order], starts, axis=0)
        return (out,)

    if idx.ndim == 1 and idx.size:
        # stable sort: repeated rows accumulate in gather order
        order = np.argsort(idx, kind="stable")
        sidx = idx[order]
        starts = np.flatnonzero(np.concatenate([[True], sidx[1:] != sidx[:-1]]))
        idx_unique = sidx[starts]
    return _op(x.value[idx], (x,), grad)


def embed_lookup(table: Tensor, ids, vocab: Mapping[str, int] | None = None) -> Tensor:
    """Embedding rows for ``ids``; out-of-vocabulary ids map to row 0.

    ``ids`` is a single id or a sequence of ids. Without ``vocab`` the ids are
    row indices, and any index outside the table also falls back to row 0.
    """
    table = _as_tensor(table)
    V = table.shape[0]

    def row(i):
        if vocab is not None:
            return vocab.get(i, 0)
        return int(i) if 0 <= int(i) < V else 0

    if isinstance(ids, (str, int, np.integer)):
        return gather(table, row(ids))
    return gather(table, np.fromiter((row(i) for i in ids), dtype=np.intp))


# reductions


def total(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape
    return _op(np.sum(x.value), (x,), lambda g: (np.full(shape, g, dtype=DTYPE),))


def mean(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    return scale(total(x), 1.0 / x.value.size)


def softmax(x: Tensor) -> Tensor:
    """Softmax of a vector, computed after subtracting its max."""
    x = _as_tensor(x)
    if x.value.ndim != 1 or x.shape[0] < 1:
        raise ShapeError(f"softmax needs a non-empty vector, got {x.shape}")
    e = np.exp(x.value - x.value.max())
    y = e / e.sum()
    return _op(y, (x,), lambda g: (y * (g - np.dot(g, y)),))


@dataclass(frozen=True)
class Segments:
    """Grouping of ``len(ids)`` rows into ``count`` contiguous segments.

    ``ids`` must be non-decreasing; segment ``s`` owns the rows where
    ``ids == s`` and may be empty. Reductions visit each segment's rows in
    row order, so results depend on row order only within a segment.
    """

    ids: np.ndarray
    count: int
    starts: np.ndarray = field(init=False, repr=False)
    present: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.intp)
        if ids.ndim != 1:
            raise ShapeError("segment ids must be 1-D")
        if ids.size and (np.any(np.diff(ids) < 0) or ids[0] < 0 or ids[-1] >= self.count):
            raise ValueError("segment ids must be sorted and lie in [0, count)")
        change = np.flatnonzero(np.diff(ids)) + 1 if ids.size else np.zeros(0, np.intp)
        starts = np.concatenate([[0], change]).astype(np.intp) if ids.size else change
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "present", ids[starts] if ids.size else np.zeros(0, np.intp))

    @classmethod
    def from_lengths(cls, lengths) -> "Segments":
        lengths = np.asarray(lengths, dtype=np.intp)
        return cls(np.repeat(np.arange(len(lengths)), lengths), len(lengths))

    def __len__(self):
        return len(self.ids)


def segment_sum(x: Tensor, seg: Segments) -> Tensor:
    """Sum rows of ``x`` per segment; empty segments give zeros."""
    x = _as_tensor(x)
    if x.shape[0] != len(seg):
        raise ShapeError(f"segment_sum: {x.shape[0]} rows vs {len(seg)} segment ids")
    out = np.zeros((seg.count,) + x.shape[1:], dtype=DTYPE)
    if len(seg):
        out[seg.present] = np.add.reduceat(x.value, seg.starts, axis=0)
    return _op(out, (x,), lambda g: (g[seg.ids],))


def segment_softmax(x: Tensor, seg: Segments) -> Tensor:
    """Softmax of a vector computed independently within each segment."""
    x = _as_tensor(x)
    if x.value.ndim != 1 or x.shape[0] != len(seg):
        raise ShapeError(f"segment_softmax: {x.shape} vs {len(seg)} segment ids")
    if not len(seg):
        return _op(x.value.copy(), (x,), lambda g: (g,))
    v = x.value
    mx = np.maximum.reduceat(v, seg.starts)
    full_mx = np.zeros(seg.count)
    full_mx[seg.present] = mx
    e = np.exp(v - full_mx[seg.ids])
    sums = np.zeros(seg.count)
    sums[seg.present] = np.add.reduceat(e, seg.starts)
    y = e / sums[seg.ids]

    def grad(g):
        gy = g * y
        s = np.zeros(seg.count)
        s[seg.present] = np.add.reduceat(gy, seg.starts)
        return (gy - y * s[seg.ids],)

    return _op(y, (x,), grad)


def binary_cross_entropy(p: Tensor, labels, clamp: float = 1e-12) -> Tensor:
    """Mean log loss of probabilities ``p`` against 0/1 ``labels``.

    ``p`` is clamped to ``[clamp, 1 - clamp]`` before the log; the gradient is
    zero where the clamp is active.
    """
    p = _as_tensor(p)
    y = np.asarray(labels, dtype=DTYPE)
    if p.value.ndim != 1 or p.shape != y.shape:
        raise ShapeError(f"binary_cross_entropy: {p.shape} vs {y.shape}")
    if y.size == 0:
        raise ValueError("binary_cross_entropy: empty batch")
    pv = p.value
    pc = np.clip(pv, clamp, 1.0 - clamp)
    inside = (pv > clamp) & (pv < 1.0 - clamp)
    n = y.size
    loss = -np.sum(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)) / n

    def grad(g):
        return (g * inside * (-(y / pc) + (1.0 - y) / (1.0 - pc)) / n,)

    return _op(loss, (p,), grad)


# gradient checking


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tol: float
    eps: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    def __str__(self):
        lines = [f"{name:<24s} {err:.3e}" for name, err in self.errors.items()]
        lines.append(f"max relative error {self.max_error:.3e} (tol {self.tol:g}) -> {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


LossFn = Callable[[Tape, Mapping[str, Tensor]], Tensor]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def grad_check(
    loss_fn: LossFn,
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare :func:`backward` with central differences, element by element.

    ``loss_fn(tape, leaves)`` must rebuild the loss from the leaf tensors it
    is handed; it is called once for the analytic gradient and twice per
    parameter element for the numeric one.
    """
    if eps <= 0 or tol <= 0:
        raise ValueError("eps and tol must be positive")
    work = {k: np.array(v, dtype=DTYPE) for k, v in params.items()}

    def evaluate(with_grad: bool):
        tape = Tape()
        leaves = {k: tape.param(v, name=k) for k, v in work.items()}
        loss = loss_fn(tape, leaves)
        if not with_grad:
            return float(loss.value)
        grads = backward(tape, loss)
        return {k: grads[t] for k, t in leaves.items()}

    analytic = evaluate(True)
    errors = {}
    for name, arr in work.items():
        flat = arr.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = evaluate(False)
            flat[i] = orig - eps
            down = evaluate(False)
            flat[i] = orig
            numeric[i] = (up - down) / (2.0 * eps)
        err = relative_error(analytic[name].reshape(-1), numeric)
        errors[name] = float(err.max()) if err.size else 0.0
    return GradCheckReport(errors, tol, eps)
