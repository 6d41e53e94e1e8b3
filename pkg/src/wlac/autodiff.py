"""Reverse-mode automatic differentiation over numpy arrays.

A Tape records ops while used as a context manager; backward replays the
record once and returns exact adjoints. Inference outside any tape records
nothing. Every op output passes a finiteness guard: NaN/Inf raises
NumericFault at the op that produced it, not three modules later.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ContractError, NumericFault

_STATE = threading.local()


def _stack():
    stack = getattr(_STATE, "stack", None)
    if stack is None:
        stack = []
        _STATE.stack = stack
    return stack


class Tape:
    """Ordered record of ops; each backward pass consumes it exactly once."""

    __slots__ = ("_nodes", "_consumed")

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        top = _stack().pop()
        if top is not self:
            raise ContractError("tape stack corrupted: exited a tape that is not innermost")
        return False


def active_tape():
    stack = _stack()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _guard(arr):
    if not np.all(np.isfinite(arr)):
        raise NumericFault("non-finite value produced by an op")
    return arr


def _make(data, parents, vjp):
    out = Tensor.__new__(Tensor)
    out.data = _guard(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        tape = active_tape()
        if tape is not None:
            tape._nodes.append((out, parents, vjp))
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


def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ContractError("matmul operands must have ndim >= 2")
    try:
        data = a.data @ b.data
    except ValueError as exc:
        raise ContractError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}") from exc

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _make(data, (a, b), vjp)


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.data.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def embedding(weight: Tensor, ids) -> Tensor:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.data.shape[0]):
        raise ContractError("embedding id out of range")

    def vjp(g):
        dw = np.zeros_like(weight.data)
        np.add.at(dw, ids, g)
        return (dw,)

    return _make(weight.data[ids], (weight,), vjp)


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0
    return _make(a.data * keep, (a,), lambda g: (g * keep,))


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    if p <= 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability {p} outside [0, 1)")
    keep = (rng.random(a.data.shape) >= p) / np.asarray(1.0 - p, dtype=a.data.dtype)
    keep = keep.astype(a.data.dtype)
    return _make(a.data * keep, (a,), lambda g: (g * keep,))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = xhat * gain.data + bias.data

    def vjp(g):
        axes = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=axes)
        dbias = g.sum(axis=axes)
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgain, dbias

    return _make(data, (x, gain, bias), vjp)


def masked_softmax(scores: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis; masked-out (False) positions get exactly 0."""
    s = scores.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        s = np.where(mask, s, -np.inf)
    m = s.max(axis=-1, keepdims=True)
    if mask is not None and not np.all(np.isfinite(m)):
        raise ContractError("softmax row with every position masked")
    e = np.exp(s - m)
    w = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        tmp = g * w
        return (tmp - w * tmp.sum(axis=-1, keepdims=True),)

    return _make(w, (scores,), vjp)


def log_softmax(a: Tensor) -> Tensor:
    s = a.data
    m = s.max(axis=-1, keepdims=True)
    z = s - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    data = z - lse

    def vjp(g):
        soft = np.exp(data)
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _make(data, (a,), vjp)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a.data.shape).copy(),)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), vjp)


def take_rows(a: Tensor, batch_idx, pos_idx) -> Tensor:
    """Select a[batch_idx[i], pos_idx[i]] rows; used to pull anchor positions."""
    batch_idx = np.asarray(batch_idx)
    pos_idx = np.asarray(pos_idx)
    if batch_idx.shape != pos_idx.shape or batch_idx.ndim != 1:
        raise ContractError("take_rows indices must be matching 1-D arrays")

    def vjp(g):
        da = np.zeros_like(a.data)
        np.add.at(da, (batch_idx, pos_idx), g)
        return (da,)

    return _make(a.data[batch_idx, pos_idx], (a,), vjp)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of targets under softmax(logits)."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.ndim != 1 or logits.data.ndim != 2:
        raise ContractError("cross_entropy expects logits [n, V] and 1-D targets")
    n, v = logits.data.shape
    if targets.shape[0] != n:
        raise ContractError("cross_entropy target count does not match logits")
    if n == 0:
        raise ContractError("cross_entropy on an empty batch")
    if targets.min() < 0 or targets.max() >= v:
        raise ContractError("cross_entropy target id out of range")
    s = logits.data
    m = s.max(axis=-1, keepdims=True)
    z = s - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    rows = np.arange(n)
    data = np.asarray(-logp[rows, targets].mean(), dtype=logits.data.dtype)

    def vjp(g):
        soft = np.exp(logp)
        soft[rows, targets] -= 1.0
        return (soft * (g / n),)

    return _make(data, (logits,), vjp)


def backward(tape: Tape, loss: Tensor, params=None) -> dict:
    """Adjoints of loss wrt every requires_grad leaf reached on the tape.

    params, when given, pins the result keys: parameters that never touched
    the loss come back with zero gradients.
    """
    if tape._consumed:
        raise ContractError("tape already consumed by a previous backward pass")
    if loss.data.size != 1:
        raise ContractError("loss must be a scalar")
    if not any(out is loss for out, _, _ in tape._nodes):
        raise ContractError("loss was not produced on this tape")
    tape._consumed = True

    grads = {id(loss): np.ones_like(loss.data)}
    refs = {}
    produced = {id(out) for out, _, _ in tape._nodes}
    for out, parents, vjp in reversed(tape._nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for parent, pg in zip(parents, vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            held = grads.get(key)
            grads[key] = pg if held is None else held + pg
            if key not in produced:
                refs[key] = parent
    result = {refs[key]: grads[key] for key in grads if key in refs}
    if params is not None:
        for p in params:
            if p not in result:
                result[p] = np.zeros_like(p.data)
    return result
