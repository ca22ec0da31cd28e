"""Reverse-mode automatic differentiation over float64 numpy buffers.

Every op builds its output with :func:`_node`, handing it a reverse rule that
maps the output gradient to one gradient per parent (``None`` where a parent
does not need one). :meth:`Tensor.backward` walks the graph once in reverse
topological order, so each reverse rule fires exactly once per call.
"""

from contextlib import contextmanager

import numpy as np

from .. import kernels

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    # -- introspection -------------------------------------------------
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
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    def zero_grad(self):
        self.grad = None

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    # -- reverse pass --------------------------------------------------
    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        if self.data.shape != ():
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("loss does not depend on any tensor requiring grad")
        order = _topo_order(self)
        grads = {id(self): np.ones(())}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _topo_order(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward, op):
    out = Tensor(data)
    out.op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ----------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), rule, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), rule, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def rule(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data * b.data, (a, b), rule, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def rule(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), rule, "div")


def pow_(a, p):
    a = as_tensor(a)
    p = float(p)

    def rule(g):
        return (g * p * a.data ** (p - 1.0),)

    return _node(a.data ** p, (a,), rule, "pow")


def matmul(a, b):
    """Matrix product; 1-D/2-D/batched operands with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ValueError("matmul needs operands with rank >= 1")
    if a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def rule(g):
        ad, bd = a.data, b.data
        a2 = ad[None, :] if ad.ndim == 1 else ad
        b2 = bd[:, None] if bd.ndim == 1 else bd
        g2 = g
        if ad.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if bd.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = gb = None
        if a.requires_grad:
            ga = g2 @ np.swapaxes(b2, -1, -2)
            if ad.ndim == 1:
                ga = ga.reshape(ga.shape[:-2] + ga.shape[-1:])
            ga = _unbroadcast(ga, a.shape)
        if b.requires_grad:
            gb = np.swapaxes(a2, -1, -2) @ g2
            if bd.ndim == 1:
                gb = gb[..., 0]
            gb = _unbroadcast(gb, b.shape)
        return ga, gb

    return _node(a.data @ b.data, (a, b), rule, "matmul")


# ----------------------------------------------------------------------
# reductions and shape ops


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), rule, "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)

    def rule(g):
        return (g.reshape(a.shape),)

    return _node(a.data.reshape(shape), (a,), rule, "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)

    def rule(g):
        return (np.transpose(g, inv),)

    return _node(np.transpose(a.data, axes), (a,), rule, "transpose")


def swapaxes(a, i, j):
    axes = list(range(as_tensor(a).ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def getitem(a, idx):
    """Slice/index; the reverse rule scatter-adds (safe for repeated indices)."""
    a = as_tensor(a)

    def rule(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), rule, "slice")


slice_ = getitem


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty list")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, rule, "concat")


# ----------------------------------------------------------------------
# nonlinearities


def sigmoid(a):
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))

    def rule(g):
        return (g * s * (1.0 - s),)

    return _node(s, (a,), rule, "sigmoid")


def tanh(a):
    a = as_tensor(a)
    t = np.tanh(a.data)

    def rule(g):
        return (g * (1.0 - t * t),)

    return _node(t, (a,), rule, "tanh")


def relu(a):
    a = as_tensor(a)
    pos = a.data > 0

    def rule(g):
        return (g * pos,)

    return _node(np.where(pos, a.data, 0.0), (a,), rule, "relu")


def exp(a):
    a = as_tensor(a)
    e = np.exp(a.data)

    def rule(g):
        return (g * e,)

    return _node(e, (a,), rule, "exp")


def log(a):
    a = as_tensor(a)

    def rule(g):
        return (g / a.data,)

    return _node(np.log(a.data), (a,), rule, "log")


def sqrt(a):
    return pow_(a, 0.5)


def clamp_min(a, floor):
    """max(a, floor); gradient flows only where a > floor."""
    a = as_tensor(a)
    above = a.data > floor

    def rule(g):
        return (g * above,)

    return _node(np.where(above, a.data, floor), (a,), rule, "clamp_min")


def masked_fill(a, keep, value):
    """Entries where ``keep`` is False are replaced by ``value``."""
    a = as_tensor(a)
    keep = np.asarray(keep, dtype=bool)

    def rule(g):
        return (_unbroadcast(np.where(keep, g, 0.0), a.shape),)

    return _node(np.where(keep, a.data, value), (a,), rule, "masked_fill")


def _softmax_np(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a, axis=-1):
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    s = _softmax_np(a.data, axis)

    def rule(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _node(s, (a,), rule, "softmax")


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] == 0:
        raise ValueError("log_softmax over an empty axis")
    m = np.max(a.data, axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def rule(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _node(out, (a,), rule, "log_softmax")


def layer_norm(a, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale by gamma and shift by beta."""
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    n = a.shape[-1]
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def rule(g):
        dxhat = g * gamma.data
        dx = inv / n * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _node(xhat * gamma.data + beta.data, (a, gamma, beta), rule, "layer_norm")


def dropout(a, p, rng, training=True):
    """Inverted dropout; ``rng`` is a numpy Generator or an int seed."""
    a = as_tensor(a)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    mask = (rng.random(a.shape) >= p) / (1.0 - p)

    def rule(g):
        return (g * mask,)

    return _node(a.data * mask, (a,), rule, "dropout")


def embedding(table, ids):
    """Row lookup ``table[ids]``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError("embedding index out of range")

    def rule(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids, g)
        return (out,)

    return _node(table.data[ids], (table,), rule, "embedding")


def cross_entropy(logits, targets, smoothing=0.0):
    """Mean over rows of CE against ``(1-s)*onehot + s/V``.

    ``logits`` is ``(N, V)``; ``targets`` holds N class ids.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    N, V = logits.shape
    if targets.shape != (N,):
        raise ValueError("targets must have one id per logits row")
    if N and (targets.min() < 0 or targets.max() >= V):
        raise ValueError("target id out of range")
    q = np.full((N, V), smoothing / V)
    q[np.arange(N), targets] += 1.0 - smoothing
    m = logits.data.max(axis=1, keepdims=True)
    shifted = logits.data - m
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -(q * logp).sum() / N

    def rule(g):
        return (g * (np.exp(logp) - q) / N,)

    return _node(np.asarray(loss), (logits,), rule, "cross_entropy")


cross_entropy_with_label_smoothing = cross_entropy


# ----------------------------------------------------------------------
# fused layers


def conv2d(x, w, b, stride=1, padding=0):
    """Single-image 2-D convolution: ``x`` (C_in, H, W), ``w`` (C_out, C_in, kh, kw)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    cin, H, W = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ValueError(f"conv2d channel mismatch: input {cin}, weight {cin_w}")
    s, p = stride, padding
    ho = (H + 2 * p - kh) // s + 1
    wo = (W + 2 * p - kw) // s + 1
    if ho < 1 or wo < 1:
        raise ValueError("conv2d input smaller than kernel")
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p)))
    cols = np.empty((cin, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i:i + s * ho:s, j:j + s * wo:s]
    colsf = cols.reshape(cin * kh * kw, ho * wo)
    wf = w.data.reshape(cout, -1)
    out = (wf @ colsf + b.data[:, None]).reshape(cout, ho, wo)

    def rule(g):
        gf = g.reshape(cout, -1)
        gx = None
        if x.requires_grad:
            dcols = (wf.T @ gf).reshape(cin, kh, kw, ho, wo)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, i, j]
            gx = dxp[:, p:p + H, p:p + W]
        return gx, (gf @ colsf.T).reshape(w.shape), gf.sum(axis=1)

    return _node(out, (x, w, b), rule, "conv2d")


def lstm(x, w_ih, w_hh, bias, reverse=False, h0=None, c0=None):
    """One LSTM direction over a ``(T, D)`` sequence; returns ``(T, H)``.

    Gate order is ``[i, f, g, o]``. The recurrence runs in the compiled kernel
    when available.
    """
    x, w_ih, w_hh, bias = (as_tensor(t) for t in (x, w_ih, w_hh, bias))
    H = w_hh.shape[0]
    if x.ndim != 2 or x.shape[1] != w_ih.shape[0]:
        raise ValueError(f"lstm input {x.shape} does not match W_ih {w_ih.shape}")
    if w_ih.shape[1] != 4 * H or w_hh.shape != (H, 4 * H) or bias.shape != (4 * H,):
        raise ValueError("inconsistent LSTM parameter shapes")
    h0 = Tensor(np.zeros(H)) if h0 is None else as_tensor(h0)
    c0 = Tensor(np.zeros(H)) if c0 is None else as_tensor(c0)
    if h0.shape != (H,) or c0.shape != (H,):
        raise ValueError(f"initial LSTM state must have shape ({H},)")
    h0d = np.ascontiguousarray(h0.data, dtype=np.float64)
    c0d = np.ascontiguousarray(c0.data, dtype=np.float64)
    xs = x.data[::-1] if reverse else x.data
    xproj = np.ascontiguousarray(xs @ w_ih.data + bias.data)
    whh = np.ascontiguousarray(w_hh.data)
    hs, cs, gates = kernels.lstm_forward(xproj, whh, h0d, c0d)

    def rule(g):
        gs = g[::-1] if reverse else g
        dxproj, dh0, dc0 = kernels.lstm_backward(np.ascontiguousarray(gs), gates, cs, whh, c0d)
        gx = None
        if x.requires_grad:
            gx = dxproj @ w_ih.data.T
            if reverse:
                gx = gx[::-1]
        h_prev = np.vstack([h0d[None, :], hs[:-1]])
        return gx, xs.T @ dxproj, h_prev.T @ dxproj, dxproj.sum(axis=0), dh0, dc0

    out = hs[::-1].copy() if reverse else hs
    return _node(out, (x, w_ih, w_hh, bias, h0, c0), rule, "lstm")
