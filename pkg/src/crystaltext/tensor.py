"""Dense tensors over numpy with reverse-mode automatic differentiation.

Every op builds a node in a computation graph when some input has
``requires_grad``; ``backward`` on a scalar walks the graph in reverse
topological order, accumulates ``.grad`` arrays, and then drops the graph
references so a tape cannot be replayed. Training runs in 32-bit; gradient
checks construct 64-bit tensors.

Broadcasting is deliberately restricted: ``add`` accepts a row-vector bias,
``mul`` a python scalar, and everything else wants exact shapes. Row-wise
scaling has its own op (``scale_rows``).
"""

from __future__ import annotations

import contextlib
import warnings

import numpy as np

from .errors import NotScalar, NumericalWarning, ShapeMismatch

_CHECKED = False


@contextlib.contextmanager
def checked_mode():
    """Raise on any NaN/Inf produced by an op while the context is active."""
    global _CHECKED
    prev = _CHECKED
    _CHECKED = True
    try:
        yield
    finally:
        _CHECKED = prev


def _finite_check(data, op_name):
    if _CHECKED and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite value produced by {op_name}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = np.ascontiguousarray(arr) if arr.ndim else arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise NotScalar(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self):
        """Reverse-mode sweep from a scalar; clears the tape afterwards."""
        if self.data.size != 1:
            raise NotScalar(f"backward needs a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in topo:
            node._parents = ()
            node._backward = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # operator sugar for the common cases
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def as_tensor(value, dtype=None) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value, dtype=dtype)


def _accumulate(t: Tensor, grad_piece):
    buf = _grad_buffer(t)
    if buf is not None:
        buf += grad_piece


def _grad_buffer(t: Tensor):
    """The (zero-initialized) gradient array of t, or None for constants."""
    if not t.requires_grad and t._backward is None and not t._parents:
        return None
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    return t.grad


def _make(data, parents, backward, op_name) -> Tensor:
    _finite_check(data, op_name)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    needs = any(p.requires_grad or p._parents for p in parents)
    out.requires_grad = needs
    out._parents = tuple(parents) if needs else ()
    out._backward = backward if needs else None
    return out


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul of {a.shape} with {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(out_data, (a, b), backward, "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatch(f"transpose wants a matrix, got {a.shape}")
    out_data = np.ascontiguousarray(a.data.T)

    def backward(g):
        _accumulate(a, g.T)

    return _make(out_data, (a,), backward, "transpose")


def add(a, b) -> Tensor:
    """Elementwise sum; also accepts a length-n bias against an m x n matrix."""
    a, b = as_tensor(a), as_tensor(b)
    bias = False
    if a.shape != b.shape:
        if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
            bias = True
        else:
            raise ShapeMismatch(f"add of {a.shape} with {b.shape}")
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g.sum(axis=0) if bias else g)

    return _make(out_data, (a, b), backward, "add")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, -g)

    return _make(-a.data, (a,), backward, "neg")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub of {a.shape} with {b.shape}")
    out_data = a.data - b.data

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(out_data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    """Elementwise product of equal shapes, or tensor times python scalar."""
    if isinstance(b, (int, float)) and not isinstance(b, bool):
        a = as_tensor(a)
        scalar = float(b)

        def backward_scalar(g):
            _accumulate(a, g * scalar)

        return _make(a.data * scalar, (a,), backward_scalar, "mul")
    if isinstance(a, (int, float)) and not isinstance(a, bool):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul of {a.shape} with {b.shape}")
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _make(out_data, (a, b), backward, "mul")


def scale_rows(a, v) -> Tensor:
    """Multiply row i of a matrix by scalar v[i]."""
    a, v = as_tensor(a), as_tensor(v)
    if a.data.ndim != 2 or v.data.ndim != 1 or a.shape[0] != v.shape[0]:
        raise ShapeMismatch(f"scale_rows of {a.shape} by {v.shape}")
    out_data = a.data * v.data[:, None]

    def backward(g):
        _accumulate(a, g * v.data[:, None])
        _accumulate(v, (g * a.data).sum(axis=1))

    return _make(out_data, (a, v), backward, "scale_rows")


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat of an empty list")
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat of {[t.shape for t in tensors]} along axis {axis}") from exc
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, piece)

    return _make(out_data, tuple(tensors), backward, "concat")


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------

def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.where(
        a.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(a.data))),
        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))),
    ).astype(a.data.dtype)

    def backward(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward, "sigmoid")


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out_data = (np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))).astype(a.data.dtype)

    def backward(g):
        sig = np.where(
            a.data >= 0,
            1.0 / (1.0 + np.exp(-np.abs(a.data))),
            np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))),
        )
        _accumulate(a, g * sig)

    return _make(out_data, (a,), backward, "softplus")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward, "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        _accumulate(a, g * (a.data > 0))

    return _make(out_data, (a,), backward, "relu")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out_data)

    return _make(out_data, (a,), backward, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.log(a.data)

    def backward(g):
        _accumulate(a, g / a.data)

    return _make(out_data, (a,), backward, "log")


# ---------------------------------------------------------------------------
# reductions and indexing
# ---------------------------------------------------------------------------

def sum_(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

    return _make(np.asarray(out_data), (a,), backward, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    out_data = a.data.mean(axis=axis)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g / count, a.shape).copy())
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis) / count, a.shape).copy())

    return _make(np.asarray(out_data), (a,), backward, "mean")


def row_gather(a, indices) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if a.data.ndim != 2 or idx.ndim != 1:
        raise ShapeMismatch(f"row_gather of {a.shape} with index shape {idx.shape}")
    out_data = a.data[idx]

    def backward(g):
        buf = _grad_buffer(a)
        if buf is not None:
            # scatter-add straight into the grad buffer; same accumulation
            # order as building a dense piece first, without the extra array
            np.add.at(buf, idx, g)

    return _make(out_data, (a,), backward, "row_gather")


def segment_sum(a, segment_ids, num_segments: int) -> Tensor:
    """Sum rows into per-segment rows: out[s] = sum of rows with segment s."""
    a = as_tensor(a)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if a.data.ndim != 2 or seg.shape != (a.shape[0],):
        raise ShapeMismatch(f"segment_sum of {a.shape} with segment shape {seg.shape}")
    out_data = np.zeros((num_segments, a.shape[1]), dtype=a.data.dtype)
    np.add.at(out_data, seg, a.data)

    def backward(g):
        _accumulate(a, g[seg])

    return _make(out_data, (a,), backward, "segment_sum")


# ---------------------------------------------------------------------------
# normalization and similarity
# ---------------------------------------------------------------------------

def l2_normalize(a) -> Tensor:
    """Normalize each row to unit L2 norm; zero rows stay zero (with a warning)."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatch(f"l2_normalize wants a matrix, got {a.shape}")
    norms = np.linalg.norm(a.data, axis=1)
    zero = norms == 0.0
    if zero.any():
        warnings.warn("l2_normalize: zero-norm row left as zeros", NumericalWarning)
    safe = np.where(zero, 1.0, norms)
    out_data = (a.data / safe[:, None]).astype(a.data.dtype)

    def backward(g):
        dot = (g * out_data).sum(axis=1)
        piece = (g - out_data * dot[:, None]) / safe[:, None]
        piece[zero] = 0.0
        _accumulate(a, piece)

    return _make(out_data, (a,), backward, "l2_normalize")


def cosine_rows(a, b) -> Tensor:
    """Per-row cosine similarity of two equal-shape matrices; returns a vector."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.data.ndim != 2:
        raise ShapeMismatch(f"cosine_rows of {a.shape} with {b.shape}")
    na = np.linalg.norm(a.data, axis=1)
    nb = np.linalg.norm(b.data, axis=1)
    denom = na * nb
    if np.any(denom == 0.0):
        warnings.warn("cosine_rows: zero-norm row gives cosine 0", NumericalWarning)
    safe = np.where(denom == 0.0, 1.0, denom)
    dots = (a.data * b.data).sum(axis=1)
    out_data = (dots / safe).astype(a.data.dtype)

    def backward(g):
        ga = (b.data / safe[:, None] - a.data * (out_data / np.where(na == 0, 1.0, na) ** 2)[:, None])
        gb = (a.data / safe[:, None] - b.data * (out_data / np.where(nb == 0, 1.0, nb) ** 2)[:, None])
        _accumulate(a, ga * g[:, None])
        _accumulate(b, gb * g[:, None])

    return _make(out_data, (a, b), backward, "cosine_rows")


def row_logsumexp(a) -> Tensor:
    """log(sum(exp(row))) per row, stabilized by subtracting the row max."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatch(f"row_logsumexp wants a matrix, got {a.shape}")
    row_max = a.data.max(axis=1, keepdims=True)
    shifted = np.exp(a.data - row_max)
    sums = shifted.sum(axis=1)
    out_data = (np.log(sums) + row_max[:, 0]).astype(a.data.dtype)

    def backward(g):
        softmax = shifted / sums[:, None]
        _accumulate(a, softmax * g[:, None])

    return _make(out_data, (a,), backward, "row_logsumexp")


def diag_part(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"diag_part wants a square matrix, got {a.shape}")
    out_data = np.ascontiguousarray(np.diagonal(a.data))

    def backward(g):
        piece = np.zeros_like(a.data)
        np.fill_diagonal(piece, g)
        _accumulate(a, piece)

    return _make(out_data, (a,), backward, "diag_part")
