"""Reverse-mode automatic differentiation over dense float64 tensors.

A :class:`Tape` records every operation whose output depends on a tensor
with ``requires_grad``; nodes are appended in execution order, so the list
is topologically ordered by construction and the backward pass is a single
reverse sweep. Tapes are rebuilt on every forward pass; there is no graph
reuse.

Operations run without recording when no tape is active, which is the
no-grad evaluation mode used for dataset generation and metrics.
"""

import numpy as np

from leads import kernels
from leads.errors import ContractError, ShapeError

_ACTIVE_TAPE = None


def _as_array(data):
    arr = np.asarray(data, dtype=np.float64)
    return arr


class Tensor:
    """Dense n-dimensional float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar so integrators can step either ndarrays or tensors.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)


class Node:
    """One recorded operation: output, ordered inputs, and a backward rule."""

    __slots__ = ("op", "out", "inputs", "backward_fn")

    def __init__(self, op, out, inputs, backward_fn):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Append-only record of operations, replayed in reverse by backward()."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ContractError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def backward(self, loss):
        """Populate ``grad`` on every requires_grad leaf reachable from loss."""
        if not isinstance(loss, Tensor):
            raise ContractError("backward expects a Tensor loss")
        if loss.data.size != 1:
            raise ContractError(
                f"backward expects a scalar loss, got shape {loss.data.shape}"
            )
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            gy = node.out.grad
            if gy is None:
                continue
            grads = node.backward_fn(gy)
            for inp, g in zip(node.inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                inp.accumulate_grad(g)


def backward(tape, loss):
    tape.backward(loss)


def active_tape():
    return _ACTIVE_TAPE


def record(op, out, inputs, backward_fn):
    """Attach a node to the active tape when the output needs gradients."""
    if _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _ACTIVE_TAPE.nodes.append(Node(op, out, inputs, backward_fn))
    return out


def _coerce(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


# ---------------------------------------------------------------------------
# forward operations


def matmul(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(gy):
        return gy @ b.data.T, a.data.T @ gy

    return record("matmul", out, (a, b), bwd)


def add(a, b):
    """Elementwise add; also allows adding a vector bias to matrix rows."""
    a, b = _coerce(a), _coerce(b)
    if a.data.shape == b.data.shape:
        out = Tensor(a.data + b.data)

        def bwd(gy):
            return gy, gy

    elif a.data.ndim >= 1 and b.data.shape == a.data.shape[-1:]:
        out = Tensor(a.data + b.data)

        def bwd(gy):
            axes = tuple(range(gy.ndim - 1))
            return gy, gy.sum(axis=axes) if axes else gy

    else:
        raise ShapeError(f"add: {a.data.shape} + {b.data.shape}")
    return record("add", out, (a, b), bwd)


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub: {a.data.shape} - {b.data.shape}")
    out = Tensor(a.data - b.data)

    def bwd(gy):
        return gy, -gy

    return record("sub", out, (a, b), bwd)


def mul(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: {a.data.shape} * {b.data.shape}")
    out = Tensor(a.data * b.data)

    def bwd(gy):
        return gy * b.data, gy * a.data

    return record("mul", out, (a, b), bwd)


def scale(a, c):
    a = _coerce(a)
    c = float(c)
    out = Tensor(a.data * c)

    def bwd(gy):
        return (gy * c,)

    return record("scale", out, (a,), bwd)


def swish(a):
    """x * sigmoid(x), elementwise."""
    a = _coerce(a)
    y, s = kernels.swish_fwd(a.data)
    out = Tensor(y)

    def bwd(gy):
        return (kernels.swish_bwd(gy, a.data, s),)

    return record("swish", out, (a,), bwd)


def conv2d_circular(x, k, b):
    """Cross-correlation with periodic padding.

    ``x`` is [channels, H, W] or [batch, channels, H, W]; ``k`` is
    [out_channels, in_channels, kh, kw]; ``b`` is [out_channels].
    """
    x, k, b = _coerce(x), _coerce(k), _coerce(b)
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or k.data.ndim != 4 or xd.shape[1] != k.data.shape[1]:
        raise ShapeError(f"conv2d_circular: x {x.data.shape}, kernel {k.data.shape}")
    if b.data.shape != (k.data.shape[0],):
        raise ShapeError(f"conv2d_circular: bias {b.data.shape} for kernel {k.data.shape}")
    y = kernels.conv2d_circ_fwd(xd, k.data, b.data)
    out = Tensor(y[0] if squeeze else y)

    def bwd(gy):
        gy4 = gy[None] if squeeze else gy
        gx, gk, gb = kernels.conv2d_circ_bwd(gy4, xd, k.data)
        return gx[0] if squeeze else gx, gk, gb

    return record("conv2d_circular", out, (x, k, b), bwd)


def reshape(a, shape):
    a = _coerce(a)
    out = Tensor(a.data.reshape(shape))

    def bwd(gy):
        return (gy.reshape(a.data.shape),)

    return record("reshape", out, (a,), bwd)


def sum_(a):
    a = _coerce(a)
    out = Tensor(a.data.sum())

    def bwd(gy):
        return (np.broadcast_to(gy, a.data.shape),)

    return record("sum", out, (a,), bwd)


def mean(a):
    a = _coerce(a)
    n = a.data.size
    out = Tensor(a.data.mean())

    def bwd(gy):
        return (np.broadcast_to(gy / n, a.data.shape),)

    return record("mean", out, (a,), bwd)


def sqnorm(a):
    """Squared L2 norm over all entries, reduced to a scalar."""
    a = _coerce(a)
    out = Tensor(np.asarray((a.data * a.data).sum()))

    def bwd(gy):
        return (2.0 * gy * a.data,)

    return record("sqnorm", out, (a,), bwd)
