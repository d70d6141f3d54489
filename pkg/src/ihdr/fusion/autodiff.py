"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Builds a dynamic computation graph; ``backward(loss)`` walks it once in
reverse topological order and accumulates ``.grad`` on every node.  Only the
operations the fusion network needs are implemented, each with a
hand-written vector-Jacobian product.  Every operation checks its output
for non-finite values and fails fast naming the offending node, so NaNs
cannot propagate silently through a training run.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class NanError(FloatingPointError):
    """A non-finite value appeared in the forward or backward pass."""


_NAN_GUARD = True


def set_nan_guard(enabled: bool):
    global _NAN_GUARD
    _NAN_GUARD = bool(enabled)


def _check(arr, where, name):
    if _NAN_GUARD and not np.all(np.isfinite(arr)):
        raise NanError(f"non-finite values in {where} of '{name}'")


class Tensor:
    """A node in the computation graph: value, grad, and a backward rule."""

    __slots__ = ("data", "grad", "name", "_parents", "_vjp")

    def __init__(self, data, name="leaf", _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.name = name
        self._parents = _parents
        self._vjp = _vjp
        _check(self.data, "forward", name)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={self.data.shape})"

    # Operator sugar; constants are wrapped on the fly.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x, name="const"):
    return x if isinstance(x, Tensor) else Tensor(x, name=name)


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _node(data, parents, vjp, name):
    return Tensor(data, name=name, _parents=tuple(parents), _vjp=vjp)


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b, name="add"):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, (a, b), vjp, name)


def sub(a, b, name="sub"):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(out, (a, b), vjp, name)


def mul(a, b, name="mul"):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _node(out, (a, b), vjp, name)


def div(a, b, name="div"):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _node(out, (a, b), vjp, name)


def pow_const(a, exponent, name="pow"):
    """a ** p for a constant exponent; caller guarantees the domain."""
    a = as_tensor(a)
    out = a.data**exponent

    def vjp(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _node(out, (a,), vjp, name)


def exp(a, name="exp"):
    a = as_tensor(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _node(out, (a,), vjp, name)


def log(a, name="log"):
    a = as_tensor(a)
    out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _node(out, (a,), vjp, name)


def log1p(a, name="log1p"):
    a = as_tensor(a)
    out = np.log1p(a.data)

    def vjp(g):
        return (g / (1.0 + a.data),)

    return _node(out, (a,), vjp, name)


def sqrt(a, name="sqrt"):
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _node(out, (a,), vjp, name)


def absolute(a, name="abs"):
    a = as_tensor(a)
    out = np.abs(a.data)

    def vjp(g):
        return (g * np.sign(a.data),)

    return _node(out, (a,), vjp, name)


def clip(a, lo, hi, name="clip"):
    """Clamp to [lo, hi]; gradient passes only strictly inside the interval."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def vjp(g):
        return (g * inside,)

    return _node(out, (a,), vjp, name)


def softplus(a, name="softplus"):
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)

    def vjp(g):
        return (g * expit(a.data),)

    return _node(out, (a,), vjp, name)


def sigmoid(a, name="sigmoid"):
    a = as_tensor(a)
    out = expit(a.data)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _node(out, (a,), vjp, name)


# ---------------------------------------------------------------------------
# Shape manipulation and reductions
# ---------------------------------------------------------------------------

def reshape(a, shape, name="reshape"):
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _node(out, (a,), vjp, name)


def transpose(a, axes=None, name="transpose"):
    a = as_tensor(a)
    # Contiguous copy so downstream BLAS calls see one memory layout and
    # value-equal graphs stay bit-equal regardless of how operands were made.
    out = np.ascontiguousarray(np.transpose(a.data, axes))
    inv = None if axes is None else np.argsort(axes)

    def vjp(g):
        return (np.transpose(g, inv),)

    return _node(out, (a,), vjp, name)


def concat(tensors, axis=0, name="concat"):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return _node(out, tensors, vjp, name)


def narrow(a, axis, start, length, name="narrow"):
    """Contiguous slice along one axis; gradient scatters back into place."""
    a = as_tensor(a)
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    out = a.data[sl]

    def vjp(g):
        da = np.zeros_like(a.data)
        da[sl] = g
        return (da,)

    return _node(out, (a,), vjp, name)


def tsum(a, axis=None, keepdims=False, name="sum"):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _node(out, (a,), vjp, name)


def tmean(a, axis=None, keepdims=False, name="mean"):
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape) / count,)

    return _node(out, (a,), vjp, name)


def matmul(a, b, name="matmul"):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _node(out, (a, b), vjp, name)


def softmax(a, axis=-1, name="softmax"):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _node(out, (a,), vjp, name)


# ---------------------------------------------------------------------------
# Spatial operations on (C, H, W) feature maps
# ---------------------------------------------------------------------------

def conv2d(x, w, stride=1, padding=0, name="conv2d"):
    """Cross-correlation of (C_in, H, W) with (C_out, C_in, kh, kw) weights."""
    x, w = as_tensor(x), as_tensor(w)
    cin, h, wd = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ValueError(f"{name}: input has {cin} channels, weights expect {cin_w}")
    hout = (h + 2 * padding - kh) // stride + 1
    wout = (wd + 2 * padding - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))

    cols = np.empty((cin, kh, kw, hout, wout))
    for di in range(kh):
        for dj in range(kw):
            cols[:, di, dj] = xp[:, di : di + stride * hout : stride, dj : dj + stride * wout : stride]
    cols2 = cols.reshape(cin * kh * kw, hout * wout)
    out = (w.data.reshape(cout, -1) @ cols2).reshape(cout, hout, wout)

    def vjp(g):
        gmat = g.reshape(cout, -1)
        dw = (gmat @ cols2.T).reshape(w.data.shape)
        dcols = (w.data.reshape(cout, -1).T @ gmat).reshape(cin, kh, kw, hout, wout)
        dxp = np.zeros_like(xp)
        for di in range(kh):
            for dj in range(kw):
                dxp[:, di : di + stride * hout : stride, dj : dj + stride * wout : stride] += dcols[:, di, dj]
        if padding:
            dx = dxp[:, padding : padding + h, padding : padding + wd]
        else:
            dx = dxp
        return dx, dw

    return _node(out, (x, w), vjp, name)


def depthwise_conv2d(x, w, padding=1, name="dwconv"):
    """Per-channel (C, kh, kw) cross-correlation, stride 1."""
    x, w = as_tensor(x), as_tensor(w)
    c, h, wd = x.data.shape
    cw, kh, kw = w.data.shape
    if c != cw:
        raise ValueError(f"{name}: input has {c} channels, weights expect {cw}")
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((c, h + 2 * padding - kh + 1, wd + 2 * padding - kw + 1))
    oh, ow = out.shape[1:]
    for di in range(kh):
        for dj in range(kw):
            out += w.data[:, di, dj][:, None, None] * xp[:, di : di + oh, dj : dj + ow]

    def vjp(g):
        dw = np.empty_like(w.data)
        dxp = np.zeros_like(xp)
        for di in range(kh):
            for dj in range(kw):
                dw[:, di, dj] = (g * xp[:, di : di + oh, dj : dj + ow]).sum(axis=(1, 2))
                dxp[:, di : di + oh, dj : dj + ow] += w.data[:, di, dj][:, None, None] * g
        if padding:
            dx = dxp[:, padding : padding + h, padding : padding + wd]
        else:
            dx = dxp
        return dx, dw

    return _node(out, (x, w), vjp, name)


def upsample2x(x, name="upsample2x"):
    """Nearest-neighbor 2x upsampling of a (C, H, W) map."""
    x = as_tensor(x)
    out = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)
    c, h, w = x.data.shape

    def vjp(g):
        return (g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)),)

    return _node(out, (x,), vjp, name)


# ---------------------------------------------------------------------------
# Backward driver
# ---------------------------------------------------------------------------

def backward(loss: Tensor):
    """Accumulate gradients of a scalar loss on every node in its graph."""
    if loss.data.ndim != 0:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    for node in order:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)

    for node in reversed(order):
        if node._vjp is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            _check(g, "backward", node.name)
            parent.grad = parent.grad + g
