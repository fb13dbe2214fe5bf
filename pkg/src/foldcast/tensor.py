"""Dense float64 tensors with reverse-mode automatic differentiation.

Every array the forecaster touches is a :class:`Tensor`: a numpy float64
buffer plus, when gradients are required, a record of the parent tensors
and the closure that pushes an output gradient back to them. Calling
``backward()`` on a scalar walks that record once in reverse topological
order. Evaluation is single-threaded and tensors are treated as immutable
after creation (the optimizer step on parameters is the one sanctioned
exception), so repeated forward passes over identical inputs are
bit-identical.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erf

_DEBUG_CHECKS = False


def set_debug_checks(enabled):
    """Toggle post-op finiteness assertions. Slow; meant for tests."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
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

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; the real work is in the module-level ops
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def backward(self):
        """Backpropagate from this scalar through the recorded graph.

        Each node is visited exactly once, in reverse topological order;
        gradients accumulate by addition where paths rejoin.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.data.shape}")
        order = []
        visited = {id(self)}
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    visited.add(id(p))
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _from_op(data, parents, backward):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    if _DEBUG_CHECKS and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by tensor op")
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g)  # own a copy; g may be a view or broadcast
    else:
        t.grad += g


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (the adjoint of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _from_op(data, (a, b), backward)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _from_op(data, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _from_op(data, (a, b), backward)


def matmul(a, b):
    """Matrix product with broadcasting over leading batch dimensions."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs ndim >= 2 operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    if b.ndim == 2 and a.ndim > 2:
        # flatten leading dims: one 2-D GEMM beats many strided batched ones
        k, n = b.data.shape
        a2 = np.ascontiguousarray(a.data).reshape(-1, k)
        data = (a2 @ b.data).reshape(a.data.shape[:-1] + (n,))

        def backward(g):
            g2 = g.reshape(-1, n)
            _accumulate(a, (g2 @ b.data.T).reshape(a.data.shape))
            _accumulate(b, a2.T @ g2)

        return _from_op(data, (a, b), backward)

    data = a.data @ b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape))
        _accumulate(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    return _from_op(data, (a, b), backward)


def tsum(t, axis=None, keepdims=False):
    t = _as_tensor(t)
    data = t.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(t, np.broadcast_to(g, t.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(t, np.broadcast_to(g, t.data.shape).copy())

    return _from_op(np.asarray(data), (t,), backward)


def tmean(t):
    t = _as_tensor(t)
    return mul(tsum(t), 1.0 / t.data.size)


def reshape(t, shape):
    t = _as_tensor(t)
    data = t.data.reshape(shape)

    def backward(g):
        _accumulate(t, g.reshape(t.data.shape))

    return _from_op(data, (t,), backward)


def transpose(t, axes):
    t = _as_tensor(t)
    data = np.transpose(t.data, axes).copy()
    inverse = np.argsort(axes)

    def backward(g):
        _accumulate(t, np.transpose(g, inverse))

    return _from_op(data, (t,), backward)


def concat_lastdim(parts):
    """Concatenate along the last dimension; gradient splits back exactly."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_lastdim needs at least one part")
    lead = parts[0].data.shape[:-1]
    for p in parts[1:]:
        if p.data.shape[:-1] != lead:
            raise ShapeError(
                f"concat_lastdim leading shapes disagree: {parts[0].shape} vs {p.shape}"
            )
    data = np.concatenate([p.data for p in parts], axis=-1)
    offsets = np.cumsum([0] + [p.data.shape[-1] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[..., lo:hi])

    return _from_op(data, tuple(parts), backward)


def slice_lastdim(t, start, stop):
    t = _as_tensor(t)
    data = t.data[..., start:stop].copy()

    def backward(g):
        full = np.zeros_like(t.data)
        full[..., start:stop] = g
        _accumulate(t, full)

    return _from_op(data, (t,), backward)


def gather_rows(t, index):
    """Select rows of ``t`` along axis 0 by an integer array.

    Output shape is ``index.shape + t.shape[1:]``; the gradient
    scatter-adds back into the selected rows, so repeated indices
    accumulate (this carries embedding-table gradients).
    """
    t = _as_tensor(t)
    index = np.asarray(index)
    if index.size and (index.min() < 0 or index.max() >= t.data.shape[0]):
        raise IndexError(f"gather_rows index out of range for {t.data.shape[0]} rows")
    data = t.data[index]

    def backward(g):
        full = np.zeros_like(t.data)
        np.add.at(full, index, g)
        _accumulate(t, full)

    return _from_op(data, (t,), backward)


def softmax_lastdim(x):
    """Numerically stabilized softmax over the last dimension."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=-1, keepdims=True)
        _accumulate(x, (g - inner) * data)

    return _from_op(data, (x,), backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize each last-dim slice to zero mean / unit population variance,
    then scale and shift. ``gamma``/``beta`` are 1-D of the last-dim length."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    n = x.data.shape[-1]
    if gamma.data.shape != (n,) or beta.data.shape != (n,):
        raise ShapeError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} "
            f"do not match last dim {n}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        _accumulate(beta, g.sum(axis=lead))
        _accumulate(gamma, (g * xhat).sum(axis=lead))
        dxhat = g * gamma.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        _accumulate(x, dx)

    return _from_op(data, (x, gamma, beta), backward)


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    """Exact-erf GELU: x * Phi(x)."""
    x = _as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    data = x.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
        _accumulate(x, g * (cdf + x.data * pdf))

    return _from_op(data, (x,), backward)


def huber_loss(pred, target, delta, include=None):
    """Mean Huber loss over the included entries.

    Quadratic for |error| <= delta, linear beyond; the two branches agree
    in value and slope at the knee. ``include`` is an optional boolean
    mask broadcastable to ``pred``; entries outside it contribute nothing
    to the mean or the gradient.
    """
    pred = _as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if delta <= 0:
        raise ValueError(f"huber delta must be positive, got {delta}")
    if target.shape != pred.data.shape:
        raise ShapeError(f"huber shapes disagree: {pred.shape} vs {target.shape}")
    if include is None:
        inc = np.ones_like(pred.data, dtype=bool)
    else:
        inc = np.broadcast_to(np.asarray(include, dtype=bool), pred.data.shape)
    count = int(inc.sum())
    if count == 0:
        raise ValueError("huber_loss: every entry is excluded")
    err = pred.data - target
    a = np.abs(err)
    per = np.where(a <= delta, 0.5 * err * err, delta * (a - 0.5 * delta))
    data = np.asarray((per * inc).sum() / count)

    def backward(g):
        _accumulate(pred, g * inc * np.clip(err, -delta, delta) / count)

    return _from_op(data, (pred,), backward)


class AdamState:
    """First/second moment estimates plus the shared step counter."""

    def __init__(self):
        self.m = {}
        self.v = {}
        self.step = 0


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update, in place on ``params``.

    ``params`` maps name -> Tensor, ``grads`` maps name -> ndarray (missing
    or None means zero gradient). Mutating parameter data here is the one
    place tensors change after creation; callers must not run it
    concurrently with a forward pass over the same parameters.
    """
    beta1, beta2 = betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(
                f"adam_step: grad shape {g.shape} does not match "
                f"param {name} shape {p.data.shape}"
            )
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        # update = lr * (m / bc1) / (sqrt(v / bc2) + eps), one temporary
        denom = np.sqrt(v)
        denom *= 1.0 / np.sqrt(bc2)
        denom += eps
        np.divide(m, denom, out=denom)
        denom *= lr / bc1
        p.data -= denom
    return state
