"""Dense-tensor engine with reverse-mode automatic differentiation.

Graphs are built per forward pass (define-by-run) and discarded after
backward(). Values are numpy arrays; float64 is used in gradient tests,
float32 in training. Backward accumulation follows graph construction
order, so repeated runs on the same graph are bit-identical.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


def _shape_err(op, *shapes):
    return ShapeError(f"{op}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype) if dtype else np.asarray(data)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self):
        return Tensor(self.data)

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Reverse-mode sweep from a scalar loss to all requires-grad leaves."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        # Iterative post-order DFS; parent tuples give a fixed visit order.
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in reversed(node._parents):
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents:
                # interior activations: free the buffer once consumed
                node.grad = None if node is not self else node.grad

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all logic lives in the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def constant(x, dtype=None):
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def _promote(a, b):
    # python-number operands adopt the tensor's dtype so float literals
    # don't upcast float32 graphs to float64
    if isinstance(a, Tensor) and isinstance(b, (bool, int, float)):
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(b, Tensor) and isinstance(a, (bool, int, float)):
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    return as_tensor(a), as_tensor(b)


def add(a, b):
    a, b = _promote(a, b)
    try:
        data = a.data + b.data
    except ValueError:
        raise _shape_err("add", a.shape, b.shape) from None

    def bw(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    return _node(data, (a, b), bw)


def sub(a, b):
    a, b = _promote(a, b)
    try:
        data = a.data - b.data
    except ValueError:
        raise _shape_err("sub", a.shape, b.shape) from None

    def bw(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(-g, b.shape))

    return _node(data, (a, b), bw)


def mul(a, b):
    a, b = _promote(a, b)
    try:
        data = a.data * b.data
    except ValueError:
        raise _shape_err("mul", a.shape, b.shape) from None

    def bw(g):
        a._accum(_unbroadcast(g * b.data, a.shape))
        b._accum(_unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), bw)


def div(a, b):
    a, b = _promote(a, b)
    try:
        data = a.data / b.data
    except ValueError:
        raise _shape_err("div", a.shape, b.shape) from None

    def bw(g):
        a._accum(_unbroadcast(g / b.data, a.shape))
        b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(data, (a, b), bw)


def neg(a):
    a = as_tensor(a)

    def bw(g):
        a._accum(-g)

    return _node(-a.data, (a,), bw)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b):
    """np.matmul semantics: 2-D mats or stacked batches with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise _shape_err("matmul", a.shape, b.shape)
    data = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        a._accum(_unbroadcast(ga, a.shape))
        b._accum(_unbroadcast(gb, b.shape))

    return _node(data, (a, b), bw)


def linear(x, w, b=None):
    """x @ w + b with w shaped (in, out)."""
    y = matmul(x, w)
    return add(y, b) if b is not None else y


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(a, shape):
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def bw(g):
        a._accum(g.reshape(a.shape))

    return _node(data, (a,), bw)


def transpose(a, axes):
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    inv = np.argsort(axes)

    def bw(g):
        a._accum(np.transpose(g, inv))

    return _node(data, (a,), bw)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        s = list(t.shape)
        s[axis] = base[axis]
        if s != base:
            raise _shape_err("concat", tensors[0].shape, t.shape)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t._accum(g[tuple(sl)])

    return _node(data, tuple(tensors), bw)


def split(a, sections, axis=0):
    """Split into chunks of the given sizes along axis."""
    a = as_tensor(a)
    if sum(sections) != a.shape[axis]:
        raise _shape_err(f"split(sections={sections})", a.shape)
    outs = []
    lo = 0
    for size in sections:
        sl = [slice(None)] * a.data.ndim
        sl[axis] = slice(lo, lo + size)
        outs.append(index(a, tuple(sl)))
        lo += size
    return outs


def index(a, key):
    """Indexing with ints/slices or integer arrays; backward scatters back."""
    a = as_tensor(a)
    data = a.data[key]
    fancy = isinstance(key, np.ndarray) or (
        isinstance(key, tuple) and any(isinstance(k, np.ndarray) for k in key))

    def bw(g):
        buf = np.zeros_like(a.data)
        if fancy:
            np.add.at(buf, key, g)
        else:
            buf[key] = g
        a._accum(buf)

    return _node(data, (a,), bw)


def gather_rows(table, idx):
    """Embedding lookup: rows of `table` (N, D) at integer index array idx."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= table.shape[0]):
        raise IndexError(f"gather_rows: index out of range for table with {table.shape[0]} rows")
    data = table.data[idx]

    def bw(g):
        buf = np.zeros_like(table.data)
        np.add.at(buf, idx, g)
        table._accum(buf)

    return _node(data, (table,), bw)


# ---------------------------------------------------------------------------
# nonlinearities

def relu(a):
    a = as_tensor(a)
    mask = a.data > 0

    def bw(g):
        a._accum(g * mask)

    return _node(a.data * mask, (a,), bw)


def sigmoid(a):
    a = as_tensor(a)
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    out[~pos] = e / (1.0 + e)

    def bw(g):
        a._accum(g * out * (1.0 - out))

    return _node(out, (a,), bw)


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)

    def bw(g):
        a._accum(g * (1.0 - out * out))

    return _node(out, (a,), bw)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)

    def bw(g):
        a._accum(g * out)

    return _node(out, (a,), bw)


def log(a):
    a = as_tensor(a)

    def bw(g):
        a._accum(g / a.data)

    return _node(np.log(a.data), (a,), bw)


def softplus(a):
    """log(1 + e^x), stable for large |x|."""
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)

    def bw(g):
        s = np.empty_like(a.data)
        pos = a.data >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
        e = np.exp(a.data[~pos])
        s[~pos] = e / (1.0 + e)
        a._accum(g * s)

    return _node(out, (a,), bw)


# ---------------------------------------------------------------------------
# reductions and normalizations

def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            a._accum(np.broadcast_to(g, a.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.shape).copy())

    return _node(data, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        n = a.shape[axis]
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def logsumexp(a, axis=-1, keepdims=False):
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    shifted = np.exp(a.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    data = np.log(total) + m
    soft = shifted / total
    if not keepdims:
        data = data.squeeze(axis)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(g * soft)

    return _node(data, (a,), bw)


def softmax(a, axis=-1):
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        a._accum(out * (g - dot))

    return _node(out, (a,), bw)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        a._accum(g - soft * g.sum(axis=axis, keepdims=True))

    return _node(out, (a,), bw)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = xhat * gamma.data + beta.data
    n = x.shape[-1]

    def bw(g):
        gx = g * gamma.data
        dxhat_sum = gx.sum(axis=-1, keepdims=True)
        dxhat_dot = (gx * xhat).sum(axis=-1, keepdims=True)
        x._accum(inv * (gx - dxhat_sum / n - xhat * dxhat_dot / n))
        gamma._accum(_unbroadcast(g * xhat, gamma.shape))
        beta._accum(_unbroadcast(g, beta.shape))

    return _node(data, (x, gamma, beta), bw)


# ---------------------------------------------------------------------------
# structured ops

def sinusoid_encoding(p, octaves):
    """Map scalars to (..., 2*octaves): (sin 2^0 pi p, cos 2^0 pi p, ...)."""
    p = as_tensor(p)
    freqs = (2.0 ** np.arange(octaves)) * math.pi  # (L,)
    angles = p.data[..., None] * freqs
    data = np.empty(p.shape + (2 * octaves,), dtype=p.data.dtype)
    data[..., 0::2] = np.sin(angles)
    data[..., 1::2] = np.cos(angles)

    def bw(g):
        dsin = g[..., 0::2] * np.cos(angles)
        dcos = -g[..., 1::2] * np.sin(angles)
        p._accum(((dsin + dcos) * freqs).sum(axis=-1))

    return _node(data, (p,), bw)


def _im2col(xpad, kh, kw, stride, out_h, out_w):
    b, c = xpad.shape[:2]
    cols = np.empty((b, c, kh, kw, out_h, out_w), dtype=xpad.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xpad[:, :, i : i + stride * out_h : stride,
                                    j : j + stride * out_w : stride]
    return cols.reshape(b, c * kh * kw, out_h * out_w)


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-D convolution, x (B,Cin,H,W), w (Cout,Cin,kh,kw)."""
    x, w = as_tensor(x), as_tensor(w)
    bt = as_tensor(b) if b is not None else None
    bs, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise _shape_err("conv2d", x.shape, w.shape)
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (wd + 2 * padding - kw) // stride + 1
    xpad = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xpad, kh, kw, stride, out_h, out_w)  # (B, Cin*kh*kw, OH*OW)
    wmat = w.data.reshape(cout, -1)
    data = np.matmul(wmat, cols).reshape(bs, cout, out_h, out_w)
    if bt is not None:
        data = data + bt.data[None, :, None, None]

    def bw(g):
        gmat = g.reshape(bs, cout, -1)
        w._accum(np.einsum("bop,bcp->oc", gmat, cols).reshape(w.shape))
        if bt is not None:
            bt._accum(g.sum(axis=(0, 2, 3)))
        dcols = np.matmul(wmat.T, gmat).reshape(bs, cin, kh, kw, out_h, out_w)
        dxpad = np.zeros_like(xpad)
        for i in range(kh):
            for j in range(kw):
                dxpad[:, :, i : i + stride * out_h : stride,
                      j : j + stride * out_w : stride] += dcols[:, :, i, j]
        if padding:
            dxpad = dxpad[:, :, padding:-padding, padding:-padding]
        x._accum(dxpad)

    parents = (x, w) if bt is None else (x, w, bt)
    return _node(data, parents, bw)


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Bias-corrected Adam over a list of parameter Tensors."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
