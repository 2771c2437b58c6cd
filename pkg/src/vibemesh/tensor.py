"""Dense-tensor numerics with reverse-mode automatic differentiation.

Values are numpy arrays wrapped in :class:`Tensor` nodes. Operations executed
while a :class:`Tape` is active record a backward closure; calling
``tape.backward(loss)`` replays the closures in exact reverse recording order
and accumulates gradients into ``Tensor.grad``.

Training runs in float32. For finite-difference gradient checks, build the
same graph in float64 (``use_dtype(np.float64)``); 32-bit arithmetic is too
noisy for central differences.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Tensor",
    "Tape",
    "ShapeMismatchError",
    "EdgeStructure",
    "no_grad",
    "use_dtype",
    "default_dtype",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "relu",
    "leaky_relu",
    "sigmoid",
    "exp",
    "log",
    "clamp",
    "softmax",
    "concat",
    "dropout",
    "tensor_sum",
    "tensor_mean",
    "reshape",
    "swap_last_axes",
    "take_rows",
    "tile_rows",
    "edge_gather",
    "edge_softmax",
    "edge_aggregate",
    "conv2d",
    "maxpool2d",
    "write_ten1",
    "read_ten1",
]


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible under trailing-dimension
    broadcasting (the only broadcasting rule this engine supports)."""


_DEFAULT_DTYPE = np.float32


def default_dtype():
    return _DEFAULT_DTYPE


@contextmanager
def use_dtype(dtype):
    """Temporarily change the dtype used for tensors built from Python data."""
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


class Tensor:
    """A dense array plus an optional gradient slot.

    Tensors are value-like: operations never mutate ``data`` in place (the
    optimizer, which owns its parameters, is the one exception).
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if isinstance(data, (np.ndarray, np.generic)):
            arr = np.asarray(data)
            if dtype is not None:
                arr = arr.astype(dtype, copy=False)
        else:
            arr = np.asarray(data, dtype=dtype if dtype is not None else _DEFAULT_DTYPE)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            # Copy: backward closures may hand the same array to two parents.
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # Operator sugar; the free functions do the real work.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of operations for one forward pass.

    ``backward`` visits the record strictly in reverse; recording order is a
    valid topological order because operands always exist before results.
    """

    _current: "Tape | None" = None

    def __init__(self):
        self.ops: list[tuple[Tensor, object]] = []
        self._prev = None

    def __enter__(self):
        self._prev = Tape._current
        Tape._current = self
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._current = self._prev
        return False

    def backward(self, loss: Tensor, seed: np.ndarray | None = None):
        """Accumulate d(loss)/d(node) into every recorded node's ``.grad``.

        The gradient of the loss with respect to itself is 1 (or ``seed``).
        """
        if loss.data.size != 1 and seed is None:
            raise ValueError("backward() without a seed requires a scalar loss")
        loss.grad = np.ones_like(loss.data) if seed is None else np.asarray(seed, dtype=loss.data.dtype)
        for node, backward_fn in reversed(self.ops):
            if node.grad is not None:
                backward_fn(node.grad)


_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _as_pair(a, b) -> tuple[Tensor, Tensor]:
    """Wrap operands; a bare Python number adopts the other side's dtype
    (so float64 graphs are not polluted by float32 constants)."""
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif isinstance(b, (int, float)) and isinstance(a, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    return _as_tensor(a), _as_tensor(b)


def _record(out: Tensor, backward_fn) -> Tensor:
    tape = Tape._current
    if tape is not None and out.requires_grad:
        tape.ops.append((out, backward_fn))
    return out


def _wants_grad(*tensors: Tensor) -> bool:
    return _grad_enabled and any(t.requires_grad for t in tensors)


def _check_broadcast(sa: tuple, sb: tuple):
    """Trailing-dimension alignment; reject anything numpy would also reject."""
    for da, db in zip(reversed(sa), reversed(sb)):
        if da != db and da != 1 and db != 1:
            raise ShapeMismatchError(f"shapes {sa} and {sb} do not broadcast")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise

def add(a, b) -> Tensor:
    a, b = _as_pair(a, b)
    _check_broadcast(a.shape, b.shape)
    out = Tensor(a.data + b.data, requires_grad=_wants_grad(a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _record(out, backward)


def sub(a, b) -> Tensor:
    a, b = _as_pair(a, b)
    _check_broadcast(a.shape, b.shape)
    out = Tensor(a.data - b.data, requires_grad=_wants_grad(a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(-_unbroadcast(g, b.shape))

    return _record(out, backward)


def mul(a, b) -> Tensor:
    a, b = _as_pair(a, b)
    _check_broadcast(a.shape, b.shape)
    out = Tensor(a.data * b.data, requires_grad=_wants_grad(a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _record(out, backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(-a.data, requires_grad=_wants_grad(a))

    def backward(g):
        a._accumulate(-g)

    return _record(out, backward)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.maximum(a.data, 0), requires_grad=_wants_grad(a))

    def backward(g):
        a._accumulate(g * (a.data > 0))

    return _record(out, backward)


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.where(a.data > 0, a.data, a.data * slope), requires_grad=_wants_grad(a))

    def backward(g):
        a._accumulate(g * np.where(a.data > 0, 1.0, slope).astype(a.dtype))

    return _record(out, backward)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    # Branch on sign to avoid overflow in exp.
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    y = y.astype(x.dtype)
    out = Tensor(y, requires_grad=_wants_grad(a))

    def backward(g):
        a._accumulate(g * y * (1.0 - y))

    return _record(out, backward)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    y = np.exp(a.data)
    out = Tensor(y, requires_grad=_wants_grad(a))

    def backward(g):
        a._accumulate(g * y)

    return _record(out, backward)


def log(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.log(a.data), requires_grad=_wants_grad(a))

    def backward(g):
        a._accumulate(g / a.data)

    return _record(out, backward)


def clamp(a, lo: float, hi: float) -> Tensor:
    a = _as_tensor(a)
    y = np.clip(a.data, lo, hi)
    out = Tensor(y, requires_grad=_wants_grad(a))
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        a._accumulate(g * inside)

    return _record(out, backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    if a.data.shape[axis] == 0:
        raise ShapeMismatchError("softmax over an empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, requires_grad=_wants_grad(a))

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        a._accumulate(y * (g - dot))

    return _record(out, backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), requires_grad=_wants_grad(*tensors))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(start, stop)
                t._accumulate(g[tuple(idx)])

    return _record(out, backward)


def dropout(a, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: surviving activations scale by 1/(1-p) in training;
    evaluation mode is the identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    a = _as_tensor(a)
    if not training or p == 0.0:
        return a
    keep = (rng.random(a.shape) >= p).astype(a.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=a.dtype)
    out = Tensor(a.data * keep * scale, requires_grad=_wants_grad(a))

    def backward(g):
        a._accumulate(g * keep * scale)

    return _record(out, backward)


# ---------------------------------------------------------------------------
# reductions / shape

def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), requires_grad=_wants_grad(a))

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.shape))

    return _record(out, backward)


def tensor_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    s = tensor_sum(a, axis=axis, keepdims=keepdims)
    return mul(s, 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.reshape(shape), requires_grad=_wants_grad(a))

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _record(out, backward)


def swap_last_axes(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.swapaxes(a.data, -1, -2), requires_grad=_wants_grad(a))

    def backward(g):
        a._accumulate(np.swapaxes(g, -1, -2))

    return _record(out, backward)


def take_rows(a, idx) -> Tensor:
    """Gather rows along axis 0. Backward scatter-adds; keep off hot paths."""
    a = _as_tensor(a)
    idx = np.asarray(idx)
    out = Tensor(a.data[idx], requires_grad=_wants_grad(a))

    def backward(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        a._accumulate(acc)

    return _record(out, backward)


def tile_rows(a, n: int) -> Tensor:
    """Broadcast a 1-D vector to n identical rows."""
    a = _as_tensor(a)
    if a.ndim != 1:
        raise ShapeMismatchError(f"tile_rows wants a 1-D tensor, got shape {a.shape}")
    out = Tensor(np.broadcast_to(a.data, (n, a.shape[0])).copy(), requires_grad=_wants_grad(a))

    def backward(g):
        a._accumulate(g.sum(axis=0))

    return _record(out, backward)


# ---------------------------------------------------------------------------
# matmul

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeMismatchError("matmul does not accept scalars")
    ka = a.shape[-1]
    kb = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if ka != kb:
        raise ShapeMismatchError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")

    a2 = a.data[None, :] if a.ndim == 1 else a.data
    b2 = b.data[:, None] if b.ndim == 1 else b.data
    y2 = a2 @ b2
    y = y2
    if b.ndim == 1:
        y = y[..., 0]
    if a.ndim == 1:
        y = y[..., 0, :] if y.ndim > 1 else y
    out = Tensor(y, requires_grad=_wants_grad(a, b))

    def backward(g):
        g2 = g
        if a.ndim == 1:
            g2 = np.expand_dims(g2, -2) if b.ndim > 1 else g2
        if b.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        if a.ndim == 1 and b.ndim == 1:
            g2 = g2.reshape(1, 1)
        if a.requires_grad:
            ga = g2 @ np.swapaxes(b2, -1, -2)
            ga = _unbroadcast(ga, a2.shape)
            a._accumulate(ga[0] if a.ndim == 1 else ga)
        if b.requires_grad:
            gb = np.swapaxes(a2, -1, -2) @ g2
            gb = _unbroadcast(gb, b2.shape)
            b._accumulate(gb[:, 0] if b.ndim == 1 else gb)

    return _record(out, backward)


# ---------------------------------------------------------------------------
# fixed-topology graph operations
#
# Message passing uses explicit edge lists rather than sparse tensors. The
# edge set (with self-loops) is fixed per mesh topology, so all index
# structures are precomputed once and shared by every forward pass.

class EdgeStructure:
    """Directed edge list sorted by (dst, src), self-loops included.

    Doubles as a CSR pattern: ``indptr``/``src`` describe an n x n matrix
    whose entry (dst, src) holds a per-edge value. ``t_perm`` reorders edge
    values into the transposed (src-major) pattern.
    """

    def __init__(self, n_nodes: int, src: np.ndarray, dst: np.ndarray):
        order = np.lexsort((src, dst))
        self.n_nodes = int(n_nodes)
        self.src = np.ascontiguousarray(src[order], dtype=np.int64)
        self.dst = np.ascontiguousarray(dst[order], dtype=np.int64)
        self.n_edges = len(self.src)
        counts = np.bincount(self.dst, minlength=n_nodes)
        if counts.min() == 0:
            raise ValueError("every node needs at least one incoming edge (add self-loops)")
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.starts = self.indptr[:-1]
        # Transposed pattern for backward aggregation.
        t_order = np.lexsort((self.dst, self.src))
        self.t_perm = t_order.astype(np.int64)
        self.t_cols = np.ascontiguousarray(self.dst[t_order])
        t_counts = np.bincount(self.src, minlength=n_nodes)
        self.t_indptr = np.concatenate([[0], np.cumsum(t_counts)]).astype(np.int64)
        self.t_starts = self.t_indptr[:-1]

    def _csr(self, values: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((values, self.src, self.indptr), shape=(self.n_nodes, self.n_nodes))

    def _csr_t(self, values: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((values[self.t_perm], self.t_cols, self.t_indptr), shape=(self.n_nodes, self.n_nodes))

    def _segment_sum(self, x: np.ndarray) -> np.ndarray:
        return np.add.reduceat(x, self.starts, axis=0)

    def _segment_sum_t(self, x: np.ndarray) -> np.ndarray:
        return np.add.reduceat(x[self.t_perm], self.t_starts, axis=0)


def edge_gather(a, es: EdgeStructure, end: str) -> Tensor:
    """Per-edge view of per-node values: out[e] = a[src[e]] or a[dst[e]]."""
    if end not in ("src", "dst"):
        raise ValueError("end must be 'src' or 'dst'")
    a = _as_tensor(a)
    idx = es.src if end == "src" else es.dst
    out = Tensor(a.data[idx], requires_grad=_wants_grad(a))

    def backward(g):
        if end == "dst":
            a._accumulate(es._segment_sum(g))
        else:
            a._accumulate(es._segment_sum_t(g))

    return _record(out, backward)


def edge_softmax(scores, es: EdgeStructure) -> Tensor:
    """Softmax of per-edge scores over each destination's incoming edges.

    Accepts (n_edges,) or (n_edges, heads); heads normalize independently.
    """
    scores = _as_tensor(scores)
    s = scores.data
    m = np.maximum.reduceat(s, es.starts, axis=0)
    e = np.exp(s - m[es.dst])
    denom = np.add.reduceat(e, es.starts, axis=0)
    y = e / denom[es.dst]
    out = Tensor(y, requires_grad=_wants_grad(scores))

    def backward(g):
        t = y * g
        seg = np.add.reduceat(t, es.starts, axis=0)
        scores._accumulate(t - y * seg[es.dst])

    return _record(out, backward)


def edge_aggregate(values, x, es: EdgeStructure) -> Tensor:
    """out[u] = sum over incoming edges e=(src->u) of values[e] * x[src[e]].

    `values` is a per-edge coefficient vector (attention weights or fixed
    normalization constants); `x` is (n_nodes, d).
    """
    values, x = _as_tensor(values), _as_tensor(x)
    if values.ndim != 1 or values.shape[0] != es.n_edges:
        raise ShapeMismatchError(f"edge values must be ({es.n_edges},), got {values.shape}")
    if x.ndim != 2 or x.shape[0] != es.n_nodes:
        raise ShapeMismatchError(f"node features must be ({es.n_nodes}, d), got {x.shape}")
    vals = values.data
    out_data = es._csr(vals) @ x.data
    out = Tensor(out_data, requires_grad=_wants_grad(values, x))

    def backward(g):
        if values.requires_grad:
            values._accumulate(np.einsum("ed,ed->e", g[es.dst], x.data[es.src]))
        if x.requires_grad:
            x._accumulate(es._csr_t(vals) @ g)

    return _record(out, backward)


# ---------------------------------------------------------------------------
# convolution / pooling (stride 1, square kernels)

def _im2col(x: np.ndarray, kh: int, kw: int, padding: int):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    b, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols), (b, ho, wo)


def _conv_raw(x: np.ndarray, w: np.ndarray, padding: int) -> np.ndarray:
    co, ci, kh, kw = w.shape
    cols, (b, ho, wo) = _im2col(x, kh, kw, padding)
    y = cols @ w.reshape(co, -1).T
    return y.reshape(b, ho, wo, co).transpose(0, 3, 1, 2)


def conv2d(x, w, b, padding: int = 1) -> Tensor:
    """2-D correlation, stride 1. x: (B, C, H, W); w: (O, C, kh, kw); b: (O,)."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatchError(f"conv2d got input {x.shape}, weight {w.shape}")
    co, ci, kh, kw = w.shape
    cols, (bn, ho, wo) = _im2col(x.data, kh, kw, padding)
    y = cols @ w.data.reshape(co, -1).T + b.data
    out = Tensor(y.reshape(bn, ho, wo, co).transpose(0, 3, 1, 2), requires_grad=_wants_grad(x, w, b))

    def backward(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, co)
        if w.requires_grad:
            w._accumulate((gmat.T @ cols).reshape(w.shape))
        if b.requires_grad:
            b._accumulate(gmat.sum(axis=0))
        if x.requires_grad:
            # Gradient w.r.t. input = full correlation with the flipped,
            # channel-transposed kernel (valid for stride 1).
            wt = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            dx = _conv_raw(g, np.ascontiguousarray(wt), kh - 1 - padding)
            x._accumulate(dx)

    return _record(out, backward)


def maxpool2d(x, k: int = 2) -> Tensor:
    """Non-overlapping k x k max pooling, ceil mode (border windows shrink)."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatchError(f"maxpool2d wants (B, C, H, W), got {x.shape}")
    b, c, h, w = x.shape
    ho, wo = -(-h // k), -(-w // k)
    xp = x.data
    if (ho * k, wo * k) != (h, w):
        xp = np.pad(xp, ((0, 0), (0, 0), (0, ho * k - h), (0, wo * k - w)), constant_values=-np.inf)
    win = xp.reshape(b, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, k * k)
    am = win.argmax(axis=-1)
    out = Tensor(np.take_along_axis(win, am[..., None], axis=-1)[..., 0], requires_grad=_wants_grad(x))

    def backward(g):
        dxp = np.zeros((b, c, ho * k, wo * k), dtype=x.dtype)
        bi, cj, oi, oj = np.ix_(np.arange(b), np.arange(c), np.arange(ho), np.arange(wo))
        rows = oi * k + am // k
        cols = oj * k + am % k
        dxp[bi, cj, rows, cols] = g
        x._accumulate(dxp[:, :, :h, :w])

    return _record(out, backward)


# ---------------------------------------------------------------------------
# TEN1 serialization
#
# Layout: magic b"TEN1" | u8 dtype (0=f32, 1=f64) | u8 rank |
#         rank x u32 little-endian dims | row-major little-endian payload.

_TEN1_MAGIC = b"TEN1"
_TEN1_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def write_ten1(path, array: np.ndarray):
    arr = np.asarray(array)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)  # keeps 0-d arrays 0-d
    if arr.dtype == np.float32:
        code, dt = 0, "<f4"
    elif arr.dtype == np.float64:
        code, dt = 1, "<f8"
    else:
        raise ValueError(f"TEN1 stores f32/f64 only, got {arr.dtype}")
    header = _TEN1_MAGIC + struct.pack("<BB", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype(dt, copy=False).tobytes(order="C")
    if hasattr(path, "write"):
        path.write(header + payload)
    else:
        with open(path, "wb") as fh:
            fh.write(header + payload)


def read_ten1(path) -> np.ndarray:
    if hasattr(path, "read"):
        blob = path.read()
    else:
        with open(path, "rb") as fh:
            blob = fh.read()
    if blob[:4] != _TEN1_MAGIC:
        raise ValueError(f"not a TEN1 blob (magic {blob[:4]!r})")
    code, rank = struct.unpack_from("<BB", blob, 4)
    if code not in _TEN1_CODES:
        raise ValueError(f"unknown TEN1 dtype code {code}")
    dims = struct.unpack_from(f"<{rank}I", blob, 6)
    dt = _TEN1_CODES[code]
    start = 6 + 4 * rank
    expect = int(np.prod(dims)) if rank else 1
    arr = np.frombuffer(blob, dtype=dt, count=expect, offset=start)
    if arr.size != expect:
        raise ValueError("TEN1 payload truncated")
    return arr.reshape(dims).copy()
