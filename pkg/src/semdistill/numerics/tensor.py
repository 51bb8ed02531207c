"""Dense float64 tensors with reverse-mode autodiff on an explicit tape.

Every primitive records (output, parents, backward) onto the active tape in
execution order, so the tape is always topologically sorted and one reverse
sweep visits each node exactly once.  Tensors are immutable values once
created; the tape is rebuilt per forward pass (define-by-run).
"""

from contextlib import contextmanager

import numpy as np

from ..errors import ContractError, NonFiniteError, ShapeError


class Tape:
    """Execution-ordered record of primitive applications."""

    __slots__ = ("entries",)

    def __init__(self):
        # each entry: (out Tensor, parents tuple, backward fn)
        self.entries = []

    def __len__(self):
        return len(self.entries)


_ACTIVE_TAPE = Tape()
_GRAD_ENABLED = True


def active_tape():
    return _ACTIVE_TAPE


@contextmanager
def fresh_tape():
    """Swap in an empty tape for the duration of the block."""
    global _ACTIVE_TAPE
    saved = _ACTIVE_TAPE
    _ACTIVE_TAPE = Tape()
    try:
        yield _ACTIVE_TAPE
    finally:
        _ACTIVE_TAPE = saved


@contextmanager
def no_grad():
    """Disable tape recording (inference mode, FD probes)."""
    global _GRAD_ENABLED
    saved = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = saved


def _finite_or_raise(arr, op):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced a non-finite value")


class Tensor:
    """A shaped block of float64 values, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "is_leaf")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        _finite_or_raise(arr, "tensor creation")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.is_leaf = True

    # -- introspection ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic primitives --------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Tensor):
            return self._add_const(float(other))
        _same_shape(self, other, "add")
        out = _make(self.data + other.data, "add")

        def backward(g):
            return g, g

        return _record(out, (self, other), backward)

    __radd__ = __add__

    def _add_const(self, c):
        out = _make(self.data + c, "add")

        def backward(g):
            return (g,)

        return _record(out, (self,), backward)

    def __sub__(self, other):
        if not isinstance(other, Tensor):
            return self._add_const(-float(other))
        _same_shape(self, other, "sub")
        out = _make(self.data - other.data, "sub")

        def backward(g):
            return g, -g

        return _record(out, (self, other), backward)

    def __rsub__(self, other):
        return (-self)._add_const(float(other))

    def __mul__(self, other):
        if not isinstance(other, Tensor):
            return self.scale(float(other))
        _same_shape(self, other, "mul")
        out = _make(self.data * other.data, "mul")
        a, b = self.data, other.data

        def backward(g):
            return g * b, g * a

        return _record(out, (self, other), backward)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scale(-1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("tensor/tensor division is not a primitive; "
                             "divide by a python scalar")
        return self.scale(1.0 / float(other))

    def scale(self, c):
        """Multiply by a python scalar constant."""
        c = float(c)
        out = _make(self.data * c, "scale")

        def backward(g):
            return (g * c,)

        return _record(out, (self,), backward)

    def __matmul__(self, other):
        if not isinstance(other, Tensor):
            raise ShapeError("matmul expects a Tensor operand")
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError("matmul operands must be 2-D")
        if self.data.shape[1] != other.data.shape[0]:
            raise ShapeError(
                f"matmul inner dimensions differ: {self.data.shape} x {other.data.shape}")
        out = _make(self.data @ other.data, "matmul")
        a, b = self.data, other.data

        def backward(g):
            return g @ b.T, a.T @ g

        return _record(out, (self, other), backward)

    def transpose(self):
        if self.data.ndim != 2:
            raise ShapeError("transpose expects a 2-D tensor")
        out = _make(self.data.T.copy(), "transpose")

        def backward(g):
            return (g.T,)

        return _record(out, (self,), backward)

    @property
    def T(self):
        return self.transpose()

    # -- elementwise primitives -------------------------------------------

    def relu(self):
        out = _make(np.maximum(self.data, 0.0), "relu")
        mask = self.data > 0.0

        def backward(g):
            return (g * mask,)

        return _record(out, (self,), backward)

    def exp(self):
        with np.errstate(over="ignore"):
            out = _make(np.exp(self.data), "exp")
        e = out.data

        def backward(g):
            return (g * e,)

        return _record(out, (self,), backward)

    def log(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            out = _make(np.log(self.data), "log")
        x = self.data

        def backward(g):
            return (g / x,)

        return _record(out, (self,), backward)

    def log_sigmoid(self):
        """Numerically stable log(sigma(x)); finite for |x| <= 700."""
        out = _make(-np.logaddexp(0.0, -self.data), "log_sigmoid")
        x = self.data

        def backward(g):
            # d/dx log sigma(x) = sigma(-x)
            return (g / (1.0 + np.exp(x)),)

        return _record(out, (self,), backward)

    def softmax(self):
        """Softmax along the last axis with max-subtraction."""
        if self.data.size == 0:
            raise ShapeError("softmax of an empty tensor")
        if self.data.ndim > 2:
            raise ShapeError("softmax expects a 1-D or 2-D tensor")
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)
        out = _make(y, "softmax")

        def backward(g):
            dot = (g * y).sum(axis=-1, keepdims=True)
            return (y * (g - dot),)

        return _record(out, (self,), backward)

    # -- reductions ---------------------------------------------------------

    def sum(self):
        out = _make(self.data.sum(), "sum")
        shape = self.data.shape

        def backward(g):
            return (np.broadcast_to(g, shape).copy(),)

        return _record(out, (self,), backward)

    def mean(self):
        if self.data.size == 0:
            raise ShapeError("mean of an empty tensor")
        n = self.data.size
        out = _make(self.data.mean(), "mean")
        shape = self.data.shape

        def backward(g):
            return (np.broadcast_to(g / n, shape).copy(),)

        return _record(out, (self,), backward)

    def sumsq(self):
        """Squared L2 norm: sum of squared entries."""
        out = _make((self.data * self.data).sum(), "sumsq")
        x = self.data

        def backward(g):
            return (2.0 * g * x,)

        return _record(out, (self,), backward)


def _same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op} operands differ in shape: "
                         f"{a.data.shape} vs {b.data.shape}")


def _make(arr, op):
    _finite_or_raise(arr, op)
    t = Tensor.__new__(Tensor)
    t.data = arr if isinstance(arr, np.ndarray) else np.asarray(arr, dtype=np.float64)
    t.requires_grad = False
    t.grad = None
    t.is_leaf = True
    return t


def _record(out, parents, backward):
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.is_leaf = False
        _ACTIVE_TAPE.entries.append((out, parents, backward))
    return out


def backward(loss, params=None):
    """Reverse sweep from a scalar loss over the active tape.

    Gradients accumulate by sum at fan-out.  Every tensor reached by the
    sweep gets its ``.grad`` set (intermediates included); tensors in
    ``params`` that the loss does not depend on get an explicit zero
    gradient.  Returns the reached leaves as a dict ``tensor -> grad``.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward root must be a Tensor")
    if loss.data.shape != ():
        raise ContractError("backward root must be a scalar (shape ())")
    grads = {id(loss): np.ones((), dtype=np.float64)}
    holders = {id(loss): loss}
    for out, parents, fn in reversed(_ACTIVE_TAPE.entries):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        holders.pop(id(out), None)
        out.grad = g
        for p, pg in zip(parents, fn(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            acc = grads.get(key)
            grads[key] = pg if acc is None else acc + pg
            holders[key] = p
    reached = {}
    for key, g in grads.items():
        t = holders[key]
        t.grad = np.asarray(g)
        reached[t] = t.grad
    if params is not None:
        for p in params:
            if id(p) not in grads:
                p.grad = np.zeros_like(p.data)
    return reached
