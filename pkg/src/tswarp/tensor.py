"""Dense float64 tensors with reverse-mode automatic differentiation.

A deliberately small, CPU-only substrate: every tensor wraps a numpy
array and records the closure that pushes its output gradient back to
its inputs.  Calling ``backward()`` on a scalar walks the recorded graph
in reverse topological order.

Two op families matter downstream:

* differentiable ops (arithmetic, ``matmul_batch``, ``masked_softmax``,
  ``layer_norm``, ``cumsum``, ...) propagate gradients;
* comparison ops (``ge``, ``logical_and``) emit plain 0/1 tensors and
  block the flow on purpose -- they back hard masking decisions that
  must not receive gradient.

All arrays are float64 and row-major.  Tensors are treated as immutable
after construction; only optimizer steps mutate parameter storage.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "maximum",
    "ge",
    "logical_and",
    "elementwise",
    "sigmoid",
    "tanh",
    "sin",
    "exp",
    "log",
    "softplus",
    "reshape",
    "transpose",
    "expand_dims",
    "squeeze",
    "concat",
    "tsum",
    "tmean",
    "cumsum",
    "matmul_batch",
    "linear",
    "embedding",
    "masked_softmax",
    "layer_norm",
    "grad_check",
]


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse mode."""

    # make `ndarray <op> Tensor` defer to our reflected operators instead
    # of numpy broadcasting Tensors element-wise into an object array
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A constant view of this tensor's values (gradient barrier)."""
        return Tensor(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into the graph's leaves."""
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar, got shape %r" % (self.shape,))
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
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar -------------------------------------------------
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
        return matmul_batch(self, other)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class Parameter(Tensor):
    """A named, trainable tensor."""

    def __init__(self, name: str, value):
        super().__init__(value, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# elementwise arithmetic (trailing-dimension broadcasting, numpy rules)
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, -g)

    return _make(-a.data, (a,), backward)


def maximum(a, const: float) -> Tensor:
    """Elementwise max with a constant; subgradient 0 at the kink."""
    a = as_tensor(a)
    c = float(const)
    data = np.maximum(a.data, c)
    keep = a.data > c

    def backward(g):
        _accum(a, g * keep)

    return _make(data, (a,), backward)


def relu(a) -> Tensor:
    return maximum(a, 0.0)


def ge(a, b) -> Tensor:
    """0/1 indicator of a >= b.  Not differentiable by design."""
    a, b = as_tensor(a), as_tensor(b)
    return Tensor((a.data >= b.data).astype(np.float64))


def logical_and(a, b) -> Tensor:
    """0/1 conjunction of two indicator tensors.  Gradient barrier."""
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(((a.data != 0) & (b.data != 0)).astype(np.float64))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "max": lambda a, b: maximum(a, b),
    "ge": ge,
    "and": logical_and,
}


def elementwise(kind: str, a, b) -> Tensor:
    """Dispatch on the op kind: add | sub | mul | max | ge | and."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return fn(a, b)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)

    def backward(g):
        _accum(a, g * data * (1.0 - data))

    return _make(data, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - data * data))

    return _make(data, (a,), backward)


def sin(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, g * np.cos(a.data))

    return _make(np.sin(a.data), (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        _accum(a, g * data)

    return _make(data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), backward)


def softplus(a) -> Tensor:
    """log(1 + e^x) computed without overflow; derivative is sigmoid."""
    a = as_tensor(a)
    x = a.data
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        _accum(a, g * s)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)

    def backward(g):
        _accum(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        _accum(a, g.transpose(inv))

    return _make(a.data.transpose(axes), (a,), backward)


def expand_dims(a, axis: int) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, np.squeeze(g, axis=axis))

    return _make(np.expand_dims(a.data, axis), (a,), backward)


def squeeze(a, axis: int) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, np.expand_dims(g, axis))

    return _make(np.squeeze(a.data, axis=axis), (a,), backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, offsets, axis=axis)):
            _accum(t, piece)

    return _make(data, tuple(tensors), backward)


# ---------------------------------------------------------------------------
# reductions and scans
# ---------------------------------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _make(data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.shape[axis]

    def backward(g):
        if axis is None:
            _accum(a, np.broadcast_to(g / count, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g / count, a.shape).copy())

    return _make(data, (a,), backward)


def cumsum(a, axis: int = -1) -> Tensor:
    """Running sum along one axis; the adjoint is the reversed running sum."""
    a = as_tensor(a)
    data = np.cumsum(a.data, axis=axis)

    def backward(g):
        rev = np.flip(g, axis=axis)
        _accum(a, np.flip(np.cumsum(rev, axis=axis), axis=axis))

    return _make(data, (a,), backward)


# ---------------------------------------------------------------------------
# contractions
# ---------------------------------------------------------------------------


def matmul_batch(a, b) -> Tensor:
    """Stacked matrix product with numpy semantics.

    ``a`` has shape (..., P, Q).  ``b`` is either (..., Q, R), giving
    (..., P, R), or (..., Q), giving (..., P).  Leading axes broadcast.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2:
        raise ValueError(f"matmul_batch: left operand needs >= 2 dims, got {a.shape}")
    vec = b.ndim == a.ndim - 1
    bd = b.data[..., None] if vec else b.data
    if bd.ndim < 2:
        raise ValueError(f"matmul_batch: right operand shape {b.shape} not usable")
    if a.shape[-1] != bd.shape[-2]:
        raise ValueError(f"matmul_batch: inner extents differ, {a.shape} @ {b.shape}")
    data = np.matmul(a.data, bd)

    def backward(g):
        gm = g[..., None] if vec else g
        da = np.matmul(gm, np.swapaxes(bd, -1, -2))
        db = np.matmul(np.swapaxes(a.data, -1, -2), gm)
        _accum(a, _unbroadcast(da, a.shape))
        db = _unbroadcast(db, bd.shape)
        _accum(b, db[..., 0] if vec else db)

    return _make(data[..., 0] if vec else data, (a, b), backward)


def linear(x, w, b=None) -> Tensor:
    """Affine map over the trailing axis: x (..., Din) -> (..., Dout)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear: got x {x.shape} against weight {w.shape}")
    data = np.matmul(x.data, w.data)
    if b is not None:
        b = as_tensor(b)
        data = data + b.data
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        _accum(x, np.matmul(g, w.data.T))
        gf = g.reshape(-1, g.shape[-1])
        xf = x.data.reshape(-1, x.shape[-1])
        _accum(w, xf.T @ gf)
        if b is not None:
            _accum(b, gf.sum(axis=0).reshape(b.shape))

    return _make(data, parents, backward)


def embedding(table, indices) -> Tensor:
    """Row lookup into ``table`` ((R, D)) by an integer index array."""
    table = as_tensor(table)
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("embedding: indices must be integers")
    rows = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        raise ValueError(
            f"embedding: index out of range [0, {rows}), got min={idx.min()} max={idx.max()}"
        )
    data = table.data[idx]

    def backward(g):
        d = np.zeros_like(table.data)
        np.add.at(d, idx, g)
        _accum(table, d)

    return _make(data, (table,), backward)


# ---------------------------------------------------------------------------
# fused normalized ops
# ---------------------------------------------------------------------------


def masked_softmax(logits, mask, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` restricted to positions where mask != 0.

    Masked positions get probability 0.  Rows whose mask is entirely
    zero come out all-zero instead of NaN; their gradient is zero too.
    The mask itself never receives gradient.
    """
    logits = as_tensor(logits)
    mdata = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    keep = np.broadcast_to(mdata != 0, logits.shape)
    neg = np.where(keep, logits.data, -np.inf)
    mx = neg.max(axis=axis, keepdims=True)
    shifted = neg - np.where(np.isfinite(mx), mx, 0.0)
    e = np.exp(shifted)
    s = e.sum(axis=axis, keepdims=True)
    out = e / np.where(s == 0.0, 1.0, s)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accum(logits, out * (g - inner))

    return _make(out, (logits,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the trailing axis to zero mean / unit variance, then
    apply a learned gain and bias.  ``eps`` sits inside the square root."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    z = xc * inv
    data = gain.data * z + bias.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        _accum(gain, (g * z).sum(axis=lead).reshape(gain.shape))
        _accum(bias, g.sum(axis=lead).reshape(bias.shape))
        gz = g * gain.data
        m1 = gz.mean(axis=-1, keepdims=True)
        m2 = (gz * z).mean(axis=-1, keepdims=True)
        _accum(x, inv * (gz - m1 - z * m2))

    return _make(data, (x, gain, bias), backward)


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------


def grad_check(fn, params, rng=None, samples_per_param: int = 8, step: float = 1e-5) -> float:
    """Compare reverse-mode gradients of ``fn()`` against central differences.

    ``fn`` must rebuild its graph from the current parameter values and
    return a scalar Tensor.  Coordinates are sampled per parameter when
    the tensor is large.  Returns the maximum relative error
    |analytic - numeric| / max(1, |numeric|); non-finite values anywhere
    are reported as failure via +inf.
    """
    params = list(params)
    for p in params:
        p.grad = None
    out = fn()
    if out.data.size != 1:
        raise ValueError("grad_check: fn() must return a scalar")
    out.backward()
    analytic = {}
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            return float("inf")
        analytic[id(p)] = np.array(g, copy=True)
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for p in params:
        n = p.data.size
        if n <= samples_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=samples_per_param, replace=False)
        flat = p.data.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            hi = float(fn().data)
            flat[c] = orig - step
            lo = float(fn().data)
            flat[c] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                return float("inf")
            numeric = (hi - lo) / (2.0 * step)
            rel = abs(analytic[id(p)].reshape(-1)[c] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, rel)
    return worst
