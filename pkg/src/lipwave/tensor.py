"""Dense tensors with reverse-mode automatic differentiation.

Arrays are numpy-backed, float32 by default; float64 is used by the
gradient-checking harness. Every differentiable operation records a
closure on the tape; ``backward`` replays closures in reverse topological
order. Execution is sequential and bitwise deterministic for fixed inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

DEFAULT_DTYPE = np.float32


def _as_array(data, dtype):
    arr = np.asarray(data)
    if arr.dtype != dtype:
        arr = arr.astype(dtype)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_g")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_array(data, dtype or DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = ()
        self._backward_fn = None
        self._g = None

    # -- op-node construction -------------------------------------------------

    @staticmethod
    def _make(data, parents, backward_fn):
        """Create an op-output node. Tape info is kept only if some parent
        leads back to a grad-requiring leaf."""
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._g = None
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward_fn = None
        return out

    def _accum(self, g):
        # transient per-backward buffer, merged into .grad at the end
        if not self.requires_grad:
            return
        if self._g is None:
            self._g = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self._g = self._g + g

    # -- properties ------------------------------------------------------------

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

    def item(self):
        return self.data.item()

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- backward --------------------------------------------------------------

    def backward(self):
        """Accumulate gradients of this scalar into every reachable
        grad-requiring leaf. Repeated calls accumulate additively."""
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise NumericError("backward called on non-finite loss")
        if not self.requires_grad:
            return

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        for node in topo:
            node._g = None
        self._g = np.ones_like(self.data)

        for node in reversed(topo):
            if node._backward_fn is not None and node._g is not None:
                node._backward_fn(node._g)

        for node in topo:
            if node.grad is not None and node._g is not None:
                node.grad += node._g
            node._g = None

    # -- operator sugar ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, *axes)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def tensor(data, requires_grad=False, dtype=None):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


# -- broadcasting helpers ----------------------------------------------------


def _unbroadcast(g, shape):
    """Reduce an upstream gradient back to ``shape`` after numpy
    right-aligned broadcasting expanded it."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


def _coerce(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=like.dtype)


# -- elementwise ops -----------------------------------------------------------


def add(a, b):
    b = _coerce(b, a)
    _check_broadcast(a, b, "add")
    out_data = a.data + b.data

    def bwd(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    return Tensor._make(out_data, (a, b), bwd)


def sub(a, b):
    b = _coerce(b, a)
    _check_broadcast(a, b, "sub")
    out_data = a.data - b.data

    def bwd(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(-g, b.shape))

    return Tensor._make(out_data, (a, b), bwd)


def mul(a, b):
    b = _coerce(b, a)
    _check_broadcast(a, b, "mul")
    out_data = a.data * b.data

    def bwd(g):
        a._accum(_unbroadcast(g * b.data, a.shape))
        b._accum(_unbroadcast(g * a.data, b.shape))

    return Tensor._make(out_data, (a, b), bwd)


def scale(a, c):
    """Multiply by a python constant."""
    c = a.data.dtype.type(c)
    out_data = a.data * c

    def bwd(g):
        a._accum(g * c)

    return Tensor._make(out_data, (a,), bwd)


def relu(a):
    out_data = np.maximum(a.data, 0.0)

    def bwd(g):
        a._accum(g * (a.data > 0))

    return Tensor._make(out_data, (a,), bwd)


def sigmoid(a):
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        a._accum(g * out_data * (1.0 - out_data))

    return Tensor._make(out_data, (a,), bwd)


def tanh(a):
    out_data = np.tanh(a.data)

    def bwd(g):
        a._accum(g * (1.0 - out_data * out_data))

    return Tensor._make(out_data, (a,), bwd)


def abs_(a):
    """|a|, with subgradient 0 at exact zeros."""
    out_data = np.abs(a.data)

    def bwd(g):
        a._accum(g * np.sign(a.data))

    return Tensor._make(out_data, (a,), bwd)


def astype(a, dtype):
    """Dtype cast; gradient casts back. Used to sum loss scalars in f64."""
    dtype = np.dtype(dtype)
    in_dtype = a.data.dtype
    out_data = a.data.astype(dtype)

    def bwd(g):
        a._accum(g.astype(in_dtype))

    return Tensor._make(out_data, (a,), bwd)


# -- matmul ----------------------------------------------------------------------


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        a._accum(g @ b.data.T)
        b._accum(a.data.T @ g)

    return Tensor._make(out_data, (a, b), bwd)


# -- shape ops ---------------------------------------------------------------------


def reshape(a, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out_data = a.data.reshape(shape)
    in_shape = a.shape

    def bwd(g):
        a._accum(g.reshape(in_shape))

    return Tensor._make(out_data, (a,), bwd)


def transpose(a, *axes):
    if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    if not axes:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    out_data = np.ascontiguousarray(a.data.transpose(axes))

    def bwd(g):
        a._accum(g.transpose(inv))

    return Tensor._make(out_data, (a,), bwd)


def broadcast_to(a, shape):
    shape = tuple(shape)
    try:
        out_data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} to {shape}") from None
    in_shape = a.shape

    def bwd(g):
        a._accum(_unbroadcast(g, in_shape))

    return Tensor._make(out_data, (a,), bwd)


def concat(tensors, axis=0):
    tensors = list(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accum(g[tuple(idx)])

    return Tensor._make(out_data, tuple(tensors), bwd)


def getitem(a, idx):
    out_data = a.data[idx]
    if np.isscalar(out_data) or out_data.ndim == 0:
        out_data = np.asarray(out_data)
    else:
        out_data = out_data.copy()

    def bwd(g):
        buf = np.zeros_like(a.data)
        buf[idx] = g
        a._accum(buf)

    return Tensor._make(out_data, (a,), bwd)


# -- reductions ----------------------------------------------------------------------


def sum_(a, axis=None):
    out_data = np.asarray(a.data.sum(axis=axis))
    in_shape = a.shape

    def bwd(g):
        if axis is None:
            a._accum(np.broadcast_to(g, in_shape).copy())
        else:
            a._accum(np.broadcast_to(np.expand_dims(g, axis), in_shape).copy())

    return Tensor._make(out_data, (a,), bwd)


def mean(a, axis=None):
    if axis is None:
        n = a.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        n = a.shape[axis]
    return scale(sum_(a, axis), 1.0 / n)
