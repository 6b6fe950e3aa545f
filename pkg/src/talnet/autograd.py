"""Minimal reverse-mode autodiff on dense numpy arrays.

Covers exactly the primitive set the network needs: matmul, elementwise
arithmetic with broadcasting, concat/slice/reshape, sigmoid/tanh/relu,
softmax / mean / max over an axis, stride-1 conv2d, and bilinear grid
sampling. float32 is the training dtype; building graphs in float64 is
supported for gradient checking.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NonFiniteError",
    "set_check_finite",
    "tensor",
    "zeros",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "concat",
    "stack",
    "reshape",
    "transpose",
    "sigmoid",
    "tanh",
    "relu",
    "exp",
    "log",
    "square",
    "softmax",
    "tsum",
    "tmean",
    "tmax",
    "hinge",
    "conv2d",
    "grid_sample",
]


class ShapeError(ValueError):
    """Raised when an op receives incompatible shapes."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class NonFiniteError(FloatingPointError):
    """Raised in finite-checking mode when an op produces nan/inf."""

    def __init__(self, op):
        self.op = op
        super().__init__(f"non-finite value produced by op '{op}'")


_CHECK_FINITE = False


def set_check_finite(flag):
    """Globally toggle per-op nan/inf detection (used by gradcheck)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


class Tensor:
    """A dense array node in the reverse-mode graph.

    Graph nodes are immutable once created; `backward()` walks the graph in
    reverse topological order and accumulates additively into `.grad`.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, op="leaf"):
        if isinstance(data, (np.ndarray, np.generic)):
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=np.float32)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = parents
        self._backward = backward_fn
        self._op = op
        if _CHECK_FINITE and not np.all(np.isfinite(self.data)):
            raise NonFiniteError(op)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ShapeError("backward", self.shape)
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # --- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return _slice(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad=False, dtype=np.float32):
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def zeros(shape, dtype=np.float32, requires_grad=False):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def constant(x, like=None):
    """Non-grad scalar/array Tensor matching `like`'s dtype (float32 default)."""
    return _as_tensor(x, like=like)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(grad, shape):
    """Reduce `grad` back down to `shape` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _make(data, parents, backward_fn, op):
    req = any(p.requires_grad for p in parents)
    if not req:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn, op=op)


# --- arithmetic ---------------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError("add", a.shape, b.shape) from None

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(out, (a, b), bwd, "add")


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError("sub", a.shape, b.shape) from None

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, -_unbroadcast(g, b.shape))

    return _make(out, (a, b), bwd, "sub")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError("mul", a.shape, b.shape) from None

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(out, (a, b), bwd, "mul")


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    try:
        out = a.data / b.data
    except ValueError:
        raise ShapeError("div", a.shape, b.shape) from None

    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out, (a, b), bwd, "div")


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    if a.shape[-1] != b.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError("matmul", a.shape, b.shape)
    out = a.data @ b.data

    def bwd(g):
        if b.data.ndim == 1:
            _accum(a, np.outer(g, b.data) if a.data.ndim == 2 else g * b.data)
            _accum(b, a.data.T @ g if a.data.ndim == 2 else a.data * g)
        else:
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            _accum(a, _unbroadcast(ga, a.shape))
            _accum(b, _unbroadcast(gb, b.shape))

    return _make(out, (a, b), bwd, "matmul")


# --- shape ops ----------------------------------------------------------

def concat(parts, axis=0):
    parts = [_as_tensor(p) for p in parts]
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[p.shape for p in parts]) from None
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(p, g[tuple(idx)])

    return _make(out, tuple(parts), bwd, "concat")


def stack(parts, axis=0):
    parts = [_as_tensor(p) for p in parts]
    out = np.stack([p.data for p in parts], axis=axis)

    def bwd(g):
        slabs = np.moveaxis(g, axis, 0)
        for p, slab in zip(parts, slabs):
            _accum(p, slab)

    return _make(out, tuple(parts), bwd, "stack")


def reshape(a, shape):
    a = _as_tensor(a)
    out = a.data.reshape(shape)

    def bwd(g):
        _accum(a, g.reshape(a.shape))

    return _make(out, (a,), bwd, "reshape")


def transpose(a, axes):
    a = _as_tensor(a)
    out = np.transpose(a.data, axes)
    inverse = np.argsort(axes)

    def bwd(g):
        _accum(a, np.transpose(g, inverse))

    return _make(out, (a,), bwd, "transpose")


def _slice(a, idx):
    a = _as_tensor(a)
    out = a.data[idx]

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accum(a, full)

    return _make(out, (a,), bwd, "slice")


# --- nonlinearities -----------------------------------------------------

def sigmoid(a):
    a = _as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        _accum(a, g * out * (1.0 - out))

    return _make(out, (a,), bwd, "sigmoid")


def tanh(a):
    a = _as_tensor(a)
    out = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - out * out))

    return _make(out, (a,), bwd, "tanh")


def relu(a):
    a = _as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def bwd(g):
        _accum(a, g * (a.data > 0))

    return _make(out, (a,), bwd, "relu")


def exp(a):
    a = _as_tensor(a)
    out = np.exp(a.data)

    def bwd(g):
        _accum(a, g * out)

    return _make(out, (a,), bwd, "exp")


def log(a):
    a = _as_tensor(a)
    out = np.log(a.data)

    def bwd(g):
        _accum(a, g / a.data)

    return _make(out, (a,), bwd, "log")


def square(a):
    a = _as_tensor(a)
    out = a.data * a.data

    def bwd(g):
        _accum(a, 2.0 * g * a.data)

    return _make(out, (a,), bwd, "square")


def hinge(a):
    """Elementwise max(a, 0); subgradient 0 at the kink."""
    return relu(a)


# --- reductions ---------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _make(out, (a,), bwd, "sum")


def tmean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size if axis is None else a.shape[axis]

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape) / n)

    return _make(out, (a,), bwd, "mean")


def tmax(a, axis):
    """Max over one axis; ties send the gradient to the first maximizer."""
    a = _as_tensor(a)
    out = a.data.max(axis=axis)
    arg = a.data.argmax(axis=axis)

    def bwd(g):
        full = np.zeros_like(a.data)
        idx = list(np.indices(out.shape))
        idx.insert(axis % a.data.ndim, arg)
        full[tuple(idx)] = g
        _accum(a, full)

    return _make(out, (a,), bwd, "max")


def softmax(a, axis):
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        _accum(a, out * (g - dot))

    return _make(out, (a,), bwd, "softmax")


# --- conv2d -------------------------------------------------------------

def _im2col(x, kh, kw, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    # (B, C, Ho, Wo, kh, kw) -> (B, Ho, Wo, C, kh, kw)
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5))


def conv2d(x, weight, bias=None, pad=0):
    """Stride-1 2-D convolution (cross-correlation): x (B,C,H,W), weight (Co,C,kh,kw)."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    B, C, H, W = x.shape
    Co, Ci, kh, kw = weight.shape
    if Ci != C:
        raise ShapeError("conv2d", x.shape, weight.shape)
    Ho, Wo = H + 2 * pad - kh + 1, W + 2 * pad - kw + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError("conv2d", x.shape, weight.shape)
    cols = _im2col(x.data, kh, kw, pad).reshape(B * Ho * Wo, C * kh * kw)
    wmat = weight.data.reshape(Co, C * kh * kw)
    out = (cols @ wmat.T).reshape(B, Ho, Wo, Co).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, Co, 1, 1)
    out = np.ascontiguousarray(out)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        gcols = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, Co)
        _accum(weight, (gcols.T @ cols).reshape(weight.shape))
        if bias is not None:
            _accum(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = (gcols @ wmat).reshape(B, Ho, Wo, C, kh, kw)
            dx = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    dx[:, :, i:i + Ho, j:j + Wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            _accum(x, dx[:, :, pad:pad + H, pad:pad + W] if pad else dx)

    return _make(out, parents, bwd, "conv2d")


# --- bilinear grid sampling ----------------------------------------------

def grid_sample(x, rows, cols):
    """Bilinear sampling of x (B,C,H,W) at per-batch point sets.

    rows, cols: (B, P) coordinates in pixel space ([0,H-1] x [0,W-1]),
    clamped to the border. Returns (B, C, P). Differentiable in x and in
    both coordinate tensors, so affine region parameters can be trained
    through the sampler.
    """
    x, rows, cols = _as_tensor(x), _as_tensor(rows), _as_tensor(cols)
    B, C, H, W = x.shape
    if rows.shape != cols.shape or rows.shape[0] != B:
        raise ShapeError("grid_sample", x.shape, rows.shape, cols.shape)
    r = np.clip(rows.data, 0.0, H - 1)
    c = np.clip(cols.data, 0.0, W - 1)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r0 = np.minimum(r0, H - 2) if H > 1 else r0 * 0
    c0 = np.minimum(c0, W - 2) if W > 1 else c0 * 0
    r1 = np.minimum(r0 + 1, H - 1)
    c1 = np.minimum(c0 + 1, W - 1)
    fr = (r - r0)[:, None, :]  # (B,1,P)
    fc = (c - c0)[:, None, :]
    bidx = np.arange(B)[:, None]
    # gather x.data[b, :, r0[b,p], c0[b,p]] for all b,p -> (B,P,C)
    g00 = x.data[bidx, :, r0, c0]
    g01 = x.data[bidx, :, r0, c1]
    g10 = x.data[bidx, :, r1, c0]
    g11 = x.data[bidx, :, r1, c1]
    # gathered shape (B, P, C) -> (B, C, P)
    g00, g01, g10, g11 = (g.transpose(0, 2, 1) for g in (g00, g01, g10, g11))
    w00 = (1 - fr) * (1 - fc)
    w01 = (1 - fr) * fc
    w10 = fr * (1 - fc)
    w11 = fr * fc
    out = w00 * g00 + w01 * g01 + w10 * g10 + w11 * g11

    def bwd(g):
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            gp = g.transpose(0, 2, 1)  # (B,P,C)
            np.add.at(dx, (bidx, slice(None), r0, c0), (w00.transpose(0, 2, 1) * gp))
            np.add.at(dx, (bidx, slice(None), r0, c1), (w01.transpose(0, 2, 1) * gp))
            np.add.at(dx, (bidx, slice(None), r1, c0), (w10.transpose(0, 2, 1) * gp))
            np.add.at(dx, (bidx, slice(None), r1, c1), (w11.transpose(0, 2, 1) * gp))
            _accum(x, dx)
        if rows.requires_grad or cols.requires_grad:
            # d(out)/dfr = (g10-g00)(1-fc) + (g11-g01)fc ; dfr/drow = 1 inside bounds
            dfr = ((g10 - g00) * (1 - fc) + (g11 - g01) * fc)
            dfc = ((g01 - g00) * (1 - fr) + (g11 - g10) * fr)
            in_r = ((rows.data > 0.0) & (rows.data < H - 1)).astype(x.dtype)
            in_c = ((cols.data > 0.0) & (cols.data < W - 1)).astype(x.dtype)
            _accum(rows, (g * dfr).sum(axis=1) * in_r)
            _accum(cols, (g * dfc).sum(axis=1) * in_c)

    return _make(out, (x, rows, cols), bwd, "grid_sample")
