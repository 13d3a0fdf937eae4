"""Minimal dense tensor engine with reverse-mode differentiation.

Tensors wrap numpy arrays. Every primitive records a closure that maps the
output gradient to input gradients; :func:`backward` walks the graph in
reverse topological order and accumulates into leaf tensors only, so
repeated backward calls on one graph add up exactly.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for a primitive."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return not self._parents

    def zero_grad(self):
        self.grad = None

    def numpy(self):
        return self.data

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_lift(other, self.dtype), -1.0))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data, parents, backward, op):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    out.op = op
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- primitives


def add(a, b):
    a = _lift(a)
    b = _lift(b, a.dtype)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward, "add")


def mul(a, b):
    a = _lift(a)
    b = _lift(b, a.dtype)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward, "mul")


def scale(a, c):
    a = _lift(a)
    c = float(c)

    def backward(g):
        return (g * c,)

    return _node(a.data * c, (a,), backward, "scale")


def matmul(a, b):
    a = _lift(a)
    b = _lift(b, a.dtype)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(out, (a, b), backward, "matmul")


def relu(a):
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return _node(a.data * mask, (a,), backward, "relu")


def softmax(a):
    """Softmax over the last axis (max-shifted)."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node(y, (a,), backward, "softmax")


def log_softmax(a):
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _node(y, (a,), backward, "log_softmax")


def layer_norm(x, gain, bias, eps=1e-5, record=None):
    """Normalize over the last axis, then apply learnable gain and bias.

    ``record`` (a list) receives the normalized activations before gain/bias.
    """
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: input {x.shape} vs gain {gain.shape} / bias {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    if record is not None:
        record.append(xhat.copy())

    def backward(g):
        gxhat = g * gain.data
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _node(xhat * gain.data + bias.data, (x, gain, bias), backward, "layer_norm")


def dropout(x, p, rng, training):
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not training or p <= 0.0:
        return x
    keep = 1.0 - p
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep

    def backward(g):
        return (g * mask,)

    return _node(x.data * mask, (x,), backward, "dropout")


def mean(x, axis):
    n = x.shape[axis]
    out = x.data.mean(axis=axis)

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).copy(),)

    return _node(out, (x,), backward, "mean")


def sum(x):
    def backward(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(np.asarray(x.data.sum()), (x,), backward, "sum")


def concat(xs, axis=-1):
    xs = [_lift(t) for t in xs]
    try:
        out = np.concatenate([t.data for t in xs], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in xs]}") from None
    sizes = np.cumsum([t.shape[axis] for t in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _node(out, xs, backward, "concat")


def transpose(x):
    """Swap the last two axes."""

    def backward(g):
        return (np.swapaxes(g, -1, -2),)

    return _node(np.swapaxes(x.data, -1, -2), (x,), backward, "transpose")


def permute(x, axes):
    inverse = np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inverse),)

    return _node(np.transpose(x.data, axes), (x,), backward, "permute")


def reshape(x, shape):
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return _node(out, (x,), backward, "reshape")


def conv2d(x, w, b, padding=1):
    """2-D cross-correlation, stride 1.

    x: (B, C_in, H, W); w: (C_out, C_in, kh, kw); b: (C_out,).
    Computed as a sum of shifted-slice contractions, one per kernel tap.
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} vs kernel {w.shape}")
    n, _, h, wd = x.shape
    _, _, kh, kw = w.shape
    ho, wo = h + 2 * padding - kh + 1, wd + 2 * padding - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: input {x.shape} too small for kernel {w.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, w.shape[0], ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + ho, j : j + wo]
            out += np.einsum("nchw,oc->nohw", patch, w.data[:, :, i, j], optimize=True)
    out += b.data[None, :, None, None]

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, i : i + ho, j : j + wo]
                gw[:, :, i, j] = np.einsum("nohw,nchw->oc", g, patch, optimize=True)
                gxp[:, :, i : i + ho, j : j + wo] += np.einsum(
                    "nohw,oc->nchw", g, w.data[:, :, i, j], optimize=True
                )
        gx = gxp[:, :, padding : padding + h, padding : padding + wd]
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _node(out, (x, w, b), backward, "conv2d")


def max_pool2d(x, size=2):
    """Non-overlapping max pooling over the last two axes; trailing rows/cols are dropped."""
    n, c, h, wd = x.shape
    ho, wo = h // size, wd // size
    if ho < 1 or wo < 1:
        raise ShapeError(f"max_pool2d: input {x.shape} too small for pool {size}")
    crop = x.data[:, :, : ho * size, : wo * size]
    blocks = crop.reshape(n, c, ho, size, wo, size).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, ho, wo, size * size)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, ho, wo, size, size).transpose(0, 1, 2, 4, 3, 5)
        gx = np.zeros_like(x.data)
        gx[:, :, : ho * size, : wo * size] = gb.reshape(n, c, ho * size, wo * size)
        return (gx,)

    return _node(out, (x,), backward, "max_pool2d")


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels)
    b, n = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise ValueError(f"cross_entropy: labels must lie in [0, {n}), got {labels.min()}..{labels.max()}")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    rows = np.arange(b)
    loss = -logp[rows, labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (g / b),)

    return _node(np.asarray(loss, dtype=logits.dtype), (logits,), backward, "cross_entropy")


# ------------------------------------------------------------------ backward


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every trainable leaf reachable from ``loss``."""
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# ---------------------------------------------------------------- grad check


def grad_check(forward, params, tolerance=1e-3, step=1e-5, floor=1e-6):
    """Compare analytic gradients against central finite differences.

    ``forward`` is a zero-argument callable returning a scalar Tensor.
    Relative error per entry is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.
    Returns a dict with per-parameter maximum errors and a ``passed`` flag;
    ``valid`` is False when two forward evaluations disagree (e.g. dropout left on).
    """
    first = float(forward().data)
    second = float(forward().data)
    if first != second:
        return {"valid": False, "passed": False, "errors": {}, "reason": "non-deterministic forward"}

    for p in params:
        p.zero_grad()
    backward(forward())

    errors = {}
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(forward().data)
            flat[i] = orig - step
            down = float(forward().data)
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2 * step)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        errors[p.name or f"param{len(errors)}"] = float((np.abs(analytic - numeric) / denom).max())
    worst = max(errors.values(), default=0.0)
    return {"valid": True, "passed": worst < tolerance, "errors": errors, "max_error": worst}
