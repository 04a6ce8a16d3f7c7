"""Dense float tensors with reverse-mode automatic differentiation.

The op set is intentionally small: exactly what the token/context encoders,
the dot-product ranker and the cross-entropy loss need.  Graphs are built
define-by-run and thrown away after each backward pass; forward values are
never mutated in place.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DTYPE = np.float32


class _Flags(threading.local):
    """Per-thread mode flags so server threads can't clobber each other."""

    def __init__(self):
        self.grad_enabled = True
        self.finite_checks = True


_flags = _Flags()


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an op."""


class NonFiniteError(FloatingPointError):
    """Raised when a forward op produces NaN or Inf."""


@contextlib.contextmanager
def no_grad():
    """Disable graph construction (inference fast path)."""
    prev = _flags.grad_enabled
    _flags.grad_enabled = False
    try:
        yield
    finally:
        _flags.grad_enabled = prev


@contextlib.contextmanager
def finite_checks(enabled: bool):
    """Toggle the NaN/Inf check on forward results."""
    prev = _flags.finite_checks
    _flags.finite_checks = enabled
    try:
        yield
    finally:
        _flags.finite_checks = prev


def _coerce(data) -> np.ndarray:
    # np.generic covers 0-d scalars produced by full reductions; they must
    # keep their dtype or float64 gradient checks lose precision at the loss.
    if isinstance(data, (np.ndarray, np.generic)) and data.dtype in (np.float32,
                                                                     np.float64):
        return np.asarray(data)
    return np.asarray(data, dtype=DEFAULT_DTYPE)


class Tensor:
    """A node in the computation graph holding a dense float array.

    Leaf tensors with ``requires_grad=True`` are parameters; everything else
    is produced by the ops below.  ``grad`` is populated by ``backward`` and
    always matches ``data`` in shape and dtype.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_inputs", "_backward")

    def __init__(self, data, requires_grad: bool = False, *, op: str = "leaf",
                 _inputs=(), _backward=None):
        self.data = _coerce(data)
        if _flags.finite_checks and not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"non-finite values produced by op '{op}'")
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._inputs = _inputs
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def backward(self):
        backward(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, op="detach")

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape}, dtype={self.data.dtype})"

    # operator sugar; scalars are promoted to constant tensors
    def __add__(self, other):
        return add(self, _const_like(other, self))

    def __radd__(self, other):
        return add(_const_like(other, self), self)

    def __sub__(self, other):
        return sub(self, _const_like(other, self))

    def __rsub__(self, other):
        return sub(_const_like(other, self), self)

    def __mul__(self, other):
        return mul(self, _const_like(other, self))

    def __rmul__(self, other):
        return mul(_const_like(other, self), self)

    def __truediv__(self, other):
        return div(self, _const_like(other, self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name: str = "") -> Tensor:
    """Create a trainable leaf tensor."""
    t = Tensor(data, requires_grad=True, op=name or "parameter")
    return t


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False, op="constant")


def _const_like(x, ref: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=ref.data.dtype), op="constant")


def _node(op: str, data: np.ndarray, inputs, backward_fn) -> Tensor:
    if _flags.grad_enabled and any(t.requires_grad for t in inputs):
        return Tensor(data, requires_grad=True, op=op,
                      _inputs=tuple(inputs), _backward=backward_fn)
    return Tensor(data, requires_grad=False, op=op)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss: Tensor):
    """Accumulate d(loss)/d(node) into ``.grad`` for every node reaching loss.

    Gradient accumulators are (re)initialized to zero on entry, so repeated
    backward passes never mix gradients from different graphs.
    """
    if loss.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")

    # iterative post-order topological sort; graphs can be 1000s of nodes deep
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for inp in node._inputs:
            if inp.requires_grad and id(inp) not in seen:
                stack.append((inp, False))

    for node in order:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)

    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for inp, g in zip(node._inputs, grads):
            if inp.requires_grad and g is not None:
                inp.grad += g


# ---------------------------------------------------------------------------
# elementwise / linear algebra ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _node("add", data, (a, b), lambda g: (
        _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    return _node("sub", data, (a, b), lambda g: (
        _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    return _node("mul", data, (a, b), lambda g: (
        _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data
    return _node("div", data, (a, b), lambda g: (
        _unbroadcast(g / b.data, a.shape),
        _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a: Tensor) -> Tensor:
    return _node("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    data = a.data @ b.data
    return _node("matmul", data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _node("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)
    return _node("relu", out, (a,), lambda g: (g * (a.data > 0),))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _node("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _node("log", out, (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)
    return _node("sqrt", out, (a,), lambda g: (g / (2.0 * out),))


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _node("concat", data, tuple(tensors),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.shape
    return _node("reshape", a.data.reshape(shape), (a,),
                 lambda g: (g.reshape(orig),))


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return _node("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def rows(a: Tensor, index) -> Tensor:
    """Gather rows (embedding lookup); repeated indices accumulate gradient."""
    idx = np.asarray(index, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"rows: index must be 1-D, got shape {idx.shape}")
    if a.shape[0] and (idx.min(initial=0) < 0 or idx.max(initial=0) >= a.shape[0]):
        raise IndexError(f"rows: index out of range for {a.shape[0]} rows")
    data = a.data[idx]

    def back(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node("rows", data, (a,), back)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def back(g):
        out = np.zeros_like(a.data)
        out[sl] = g
        return (out,)

    return _node("narrow", a.data[sl].copy(), (a,), back)


def pad_rows(a: Tensor, before: int, after: int) -> Tensor:
    """Zero-pad along axis 0."""
    widths = [(before, after)] + [(0, 0)] * (a.ndim - 1)
    data = np.pad(a.data, widths)
    n = a.shape[0]
    return _node("pad_rows", data, (a,), lambda g: (g[before:before + n],))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.data.dtype),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).astype(a.data.dtype),)

    return _node("reduce_sum", data, (a,), back)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    s = reduce_sum(a, axis=axis, keepdims=keepdims)
    return mul(s, _const_like(1.0 / count, s))


def reduce_max(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient routes to the first attaining element."""
    data = a.data.max(axis=axis, keepdims=keepdims)
    arg = np.argmax(a.data, axis=axis)  # first occurrence on ties

    def back(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        out = np.zeros_like(a.data)
        np.put_along_axis(out, np.expand_dims(arg, axis), gg, axis=axis)
        return (out,)

    return _node("reduce_max", data, (a,), back)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis``."""
    shift = constant(a.data.max(axis=axis, keepdims=True))
    e = exp(sub(a, shift))
    return div(e, reduce_sum(e, axis=axis, keepdims=True))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shift = constant(a.data.max(axis=axis, keepdims=True))
    shifted = sub(a, shift)
    return sub(shifted, log(reduce_sum(exp(shifted), axis=axis, keepdims=True)))


# ---------------------------------------------------------------------------
# segment ops (variable-length batching without padding)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentIndex:
    """Maps each row of a flat value tensor to its owning segment."""

    ids: np.ndarray
    count: int

    def __init__(self, ids, count: int):
        arr = np.asarray(ids, dtype=np.intp)
        if arr.ndim != 1:
            raise ShapeError(f"segment ids must be 1-D, got shape {arr.shape}")
        if count < 1:
            raise ValueError("segment count must be positive")
        if arr.size and (arr.min() < 0 or arr.max() >= count):
            raise IndexError(
                f"segment id out of range: ids span "
                f"[{arr.min()}, {arr.max()}] with count {count}")
        object.__setattr__(self, "ids", arr)
        object.__setattr__(self, "count", count)

    def __len__(self):
        return self.ids.size


def _check_segment(values: Tensor, seg: SegmentIndex):
    if values.shape[0] != len(seg):
        raise ShapeError(
            f"segment op: {values.shape[0]} rows vs {len(seg)} segment ids")


def segment_sum(values: Tensor, seg: SegmentIndex) -> Tensor:
    """Sum rows into segments; empty segments yield zero rows."""
    _check_segment(values, seg)
    out_shape = (seg.count,) + values.shape[1:]
    data = np.zeros(out_shape, dtype=values.data.dtype)
    np.add.at(data, seg.ids, values.data)
    return _node("segment_sum", data, (values,), lambda g: (g[seg.ids],))


def segment_max_data(values: np.ndarray, seg: SegmentIndex) -> np.ndarray:
    """Per-segment columnwise max of a raw array; empty segments are 0."""
    flat = values.reshape(values.shape[0], -1)
    out = np.full((seg.count, flat.shape[1]), -np.inf, dtype=values.dtype)
    np.maximum.at(out, seg.ids, flat)
    empty = np.bincount(seg.ids, minlength=seg.count) == 0
    out[empty] = 0.0
    return out.reshape((seg.count,) + values.shape[1:])


def segment_max(values: Tensor, seg: SegmentIndex) -> Tensor:
    """Per-segment columnwise max; on ties the gradient goes to the first row."""
    _check_segment(values, seg)
    data = segment_max_data(values.data, seg)
    n = values.shape[0]
    k = int(np.prod(values.shape[1:], dtype=np.intp)) if values.ndim > 1 else 1

    def back(g):
        vals = values.data.reshape(n, k)
        gmax = data.reshape(seg.count, k)[seg.ids]
        hits = vals == gmax
        rows_, cols = np.nonzero(hits)
        lin = seg.ids[rows_] * k + cols
        first = np.full(seg.count * k, n, dtype=np.intp)
        np.minimum.at(first, lin, rows_)
        cells = np.nonzero(first < n)[0]
        out = np.zeros((n, k), dtype=values.data.dtype)
        out[first[cells], cells % k] = g.reshape(seg.count * k)[cells]
        return (out.reshape(values.shape),)

    return _node("segment_max", data, (values,), back)


def segment_softmax(scores: Tensor, seg: SegmentIndex) -> Tensor:
    """Softmax within each segment, stabilized by per-segment max subtraction."""
    _check_segment(scores, seg)
    shift = constant(segment_max_data(scores.data, seg)[seg.ids])
    e = exp(sub(scores, shift))
    denom = rows(segment_sum(e, seg), seg.ids)
    return div(e, denom)


def segment_log_softmax(scores: Tensor, seg: SegmentIndex) -> Tensor:
    _check_segment(scores, seg)
    shift = constant(segment_max_data(scores.data, seg)[seg.ids])
    shifted = sub(scores, shift)
    log_z = rows(log(segment_sum(exp(shifted), seg)), seg.ids)
    return sub(shifted, log_z)


# ---------------------------------------------------------------------------
# 1-D convolution (valid windows over axis 0)
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Convolve ``x`` (L x Cin) with ``w`` (K x Cin x Cout) over positions.

    Returns (L-K+1) x Cout; callers pad shorter inputs with ``pad_rows``.
    """
    if x.ndim != 2 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {w.shape}")
    length, _ = x.shape
    k = w.shape[0]
    if length < k:
        raise ShapeError(f"conv1d: input length {length} shorter than kernel {k}")
    windows = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=0)
    # windows: (L-K+1) x Cin x K
    data = np.einsum("lck,kco->lo", windows, w.data)
    if b is not None:
        data = data + b.data

    def back(g):
        dw = np.einsum("lck,lo->kco", windows, g)
        dx = np.zeros_like(x.data)
        for j in range(k):
            # output position l consumed x[l + j]
            dx[j:j + g.shape[0]] += g @ w.data[j].T
        db = g.sum(axis=0) if b is not None else None
        return (dx, dw, db) if b is not None else (dx, dw)

    inputs = (x, w, b) if b is not None else (x, w)
    return _node("conv1d", data, inputs, back)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Outcome of comparing backward gradients against central differences."""

    max_rel_err: float
    passed: bool
    eps: float
    tol: float
    per_param: dict = field(default_factory=dict)


def grad_check(build, params, eps: float = 1e-5, tol: float = 1e-4,
               max_entries_per_param: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients with 64-bit central finite differences.

    ``build`` maps the parameter list to a scalar loss tensor.  Parameters are
    copied to float64 so the finite-difference oracle is evaluated at full
    precision; the production float32 path is unaffected.
    """
    params64 = [Tensor(p.data.astype(np.float64), requires_grad=True, op=p.op)
                for p in params]
    loss = build(params64)
    backward(loss)
    analytic = [p.grad.copy() for p in params64]

    rng = rng or np.random.default_rng(0)
    max_err = 0.0
    per_param = {}
    with no_grad():
        for pi, p in enumerate(params64):
            flat = p.data.reshape(-1)
            idxs = np.arange(flat.size)
            if max_entries_per_param is not None and flat.size > max_entries_per_param:
                idxs = rng.choice(flat.size, size=max_entries_per_param, replace=False)
            p_err = 0.0
            for j in idxs:
                orig = flat[j]
                flat[j] = orig + eps
                up = build(params64).item()
                flat[j] = orig - eps
                down = build(params64).item()
                flat[j] = orig
                numeric = (up - down) / (2.0 * eps)
                a = analytic[pi].reshape(-1)[j]
                err = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
                p_err = max(p_err, err)
            per_param[pi] = p_err
            max_err = max(max_err, p_err)
    return GradCheckReport(max_rel_err=max_err, passed=max_err < tol,
                           eps=eps, tol=tol, per_param=per_param)
