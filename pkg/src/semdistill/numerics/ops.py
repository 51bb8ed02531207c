"""Structural and statistical primitives on top of the tensor core."""

import numpy as np

from ..errors import DegenerateInputError, ShapeError
from .tensor import Tensor, _make, _record


def concat(tensors):
    """Concatenate along the last axis (1-D lengths or 2-D columns)."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of an empty list")
    ndim = tensors[0].data.ndim
    if ndim not in (1, 2) or any(t.data.ndim != ndim for t in tensors):
        raise ShapeError("concat expects tensors of equal rank 1 or 2")
    if ndim == 2:
        rows = tensors[0].data.shape[0]
        if any(t.data.shape[0] != rows for t in tensors):
            raise ShapeError("concat of 2-D tensors with differing row counts")
    out = _make(np.concatenate([t.data for t in tensors], axis=-1), "concat")
    widths = [t.data.shape[-1] for t in tensors]
    splits = np.cumsum(widths)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(piece)
                     for piece in np.split(g, splits, axis=-1))

    return _record(out, tuple(tensors), backward)


def stack(scalars):
    """Assemble 0-d scalar tensors into a 1-D vector."""
    scalars = list(scalars)
    if not scalars:
        raise ShapeError("stack of an empty list")
    if any(s.data.shape != () for s in scalars):
        raise ShapeError("stack expects scalar (shape ()) tensors")
    out = _make(np.array([s.data for s in scalars], dtype=np.float64), "stack")

    def backward(g):
        return tuple(np.asarray(g[i]) for i in range(len(scalars)))

    return _record(out, tuple(scalars), backward)


def gather(table, ids):
    """Row gather (embedding lookup): out[i] = table[ids[i]]."""
    if table.data.ndim != 2:
        raise ShapeError("gather expects a 2-D table")
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("gather ids must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeError("gather id out of range")
    out = _make(table.data[idx].copy(), "gather")
    rows = table.data.shape

    def backward(g):
        dt = np.zeros(rows, dtype=np.float64)
        np.add.at(dt, idx, g)
        return (dt,)

    return _record(out, (table,), backward)


def slice_cols(x, start, stop):
    """Contiguous column slice of a 2-D tensor."""
    if x.data.ndim != 2:
        raise ShapeError("slice_cols expects a 2-D tensor")
    if not (0 <= start < stop <= x.data.shape[1]):
        raise ShapeError(f"bad column slice [{start}:{stop}] "
                         f"for width {x.data.shape[1]}")
    out = _make(x.data[:, start:stop].copy(), "slice_cols")
    shape = x.data.shape

    def backward(g):
        dx = np.zeros(shape, dtype=np.float64)
        dx[:, start:stop] = g
        return (dx,)

    return _record(out, (x,), backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Per-row layer normalization with population variance.

    1-D input is treated as a single row; gamma/beta are 1-D of the row
    width.
    """
    if eps <= 0:
        raise ShapeError("layer_norm eps must be positive")
    if x.data.ndim not in (1, 2):
        raise ShapeError("layer_norm expects a 1-D or 2-D tensor")
    width = x.data.shape[-1]
    if width == 0:
        raise ShapeError("layer_norm of an empty row")
    if gamma.data.shape != (width,) or beta.data.shape != (width,):
        raise ShapeError("layer_norm gamma/beta must match the row width")
    xd = x.data if x.data.ndim == 2 else x.data[None, :]
    mu = xd.mean(axis=-1, keepdims=True)
    var = xd.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    y = xhat * gamma.data + beta.data
    out = _make(y.reshape(x.data.shape), "layer_norm")
    n = width

    def backward(g):
        gd = g if g.ndim == 2 else g[None, :]
        dgamma = (gd * xhat).sum(axis=0)
        dbeta = gd.sum(axis=0)
        dxhat = gd * gamma.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / n)
        return dx.reshape(x.data.shape), dgamma, dbeta

    return _record(out, (x, gamma, beta), backward)


def cosine(u, v):
    """Cosine similarity of two tensors viewed as flat vectors."""
    if u.data.size != v.data.size:
        raise ShapeError("cosine operands differ in size")
    ud = u.data.ravel()
    vd = v.data.ravel()
    nu = np.linalg.norm(ud)
    nv = np.linalg.norm(vd)
    if nu <= 1e-12 or nv <= 1e-12:
        raise DegenerateInputError("cosine of a (near-)zero vector")
    c = float(ud @ vd / (nu * nv))
    out = _make(np.asarray(c), "cosine")

    def backward(g):
        du = (vd / (nu * nv) - c * ud / (nu * nu)) * g
        dv = (ud / (nu * nv) - c * vd / (nv * nv)) * g
        return du.reshape(u.data.shape), dv.reshape(v.data.shape)

    return _record(out, (u, v), backward)


def pearson(u, v):
    """Pearson correlation of two tensors viewed as flat vectors."""
    if u.data.size != v.data.size:
        raise ShapeError("pearson operands differ in size")
    n = u.data.size
    if n < 2:
        raise ShapeError("pearson needs at least 2 entries")
    ud = u.data.ravel()
    vd = v.data.ravel()
    uc = ud - ud.mean()
    vc = vd - vd.mean()
    b = float(uc @ uc)
    c2 = float(vc @ vc)
    if np.sqrt(b / n) <= 1e-12 or np.sqrt(c2 / n) <= 1e-12:
        raise DegenerateInputError("pearson of a constant vector")
    a = float(uc @ vc)
    denom = np.sqrt(b * c2)
    r = a / denom
    out = _make(np.asarray(r), "pearson")

    def backward(g):
        du = (vc / denom - r * uc / b) * g
        dv = (uc / denom - r * vc / c2) * g
        return du.reshape(u.data.shape), dv.reshape(v.data.shape)

    return _record(out, (u, v), backward)


def linear(x, w, b=None):
    """x @ w + b with b tiled over rows; b stored as a [1 x n] tensor."""
    y = x @ w
    if b is None:
        return y
    rows = y.data.shape[0]
    if rows == 1:
        return y + b
    ones = Tensor(np.ones((rows, 1)))
    return y + ones @ b


def logsumexp(v):
    """log(sum(exp(v))) with max-subtraction, built from primitives."""
    m = float(v.data.max())
    return (v - m).exp().sum().log() + m


def sigmoid(x):
    """sigma(x) = exp(log_sigmoid(x)); stable composite."""
    return x.log_sigmoid().exp()
