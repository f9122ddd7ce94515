"""Minimal reverse-mode differentiation over numpy arrays.

Only the operations the training objective needs are provided.  Every
operation records a node on the owning :class:`Tape`; creation order is a
topological order, so the backward sweep simply walks the record in reverse
and visits each node once.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Backward = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Node:
    __slots__ = ("tape", "value", "grad", "parents", "backward", "requires_grad", "name")

    def __init__(self, tape, value, parents=(), backward=None, requires_grad=False, name=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.parents = tuple(parents)
        self.backward = backward
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return np.shape(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(self.tape.wrap(other)))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Node(name={self.name!r}, shape={self.shape})"


class Tape:
    """Records nodes as operations run; ``backward`` sweeps them in reverse.

    Straight-through nodes log their (hard value, surrogate) pair in
    ``st_anchors``.  Passing that list to a new tape replays the same hard
    decisions with forward value ``hard + surrogate - surrogate_at_anchor``,
    which makes the straight-through gradient an ordinary derivative that
    finite differences can check.
    """

    def __init__(self, anchors: list | None = None):
        self.nodes: list[Node] = []
        self.st_anchors: list = []
        self._replay = anchors

    def leaf(self, value, name=None) -> Node:
        n = Node(self, np.asarray(value, dtype=np.float64), requires_grad=True, name=name)
        self.nodes.append(n)
        return n

    def constant(self, value) -> Node:
        return Node(self, np.asarray(value, dtype=np.float64))

    def wrap(self, x) -> Node:
        return x if isinstance(x, Node) else self.constant(x)

    def record(self, value, parents: Sequence[Node], backward: Backward, name=None) -> Node:
        """Add a custom node; ``backward(g)`` returns one gradient per parent."""
        needs = any(p.requires_grad for p in parents)
        n = Node(self, value, parents, backward if needs else None, needs, name)
        if needs:
            self.nodes.append(n)
        return n

    def backward(self, out: Node) -> None:
        if np.size(out.value) != 1:
            raise ValueError("backward expects a scalar output")
        for n in self.nodes:
            n.grad = None
        out.grad = np.ones_like(out.value)
        for n in reversed(self.nodes):
            if n.grad is None or n.backward is None:
                continue
            grads = n.backward(n.grad)
            for p, g in zip(n.parents, grads):
                if g is None or not p.requires_grad:
                    continue
                p.grad = g if p.grad is None else p.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise TypeError("at least one argument must be a Node")


def add(a, b) -> Node:
    t = _tape_of(a, b)
    a, b = t.wrap(a), t.wrap(b)
    sa, sb = a.shape, b.shape
    return t.record(a.value + b.value, (a, b),
                    lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a: Node) -> Node:
    return a.tape.record(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Node:
    t = _tape_of(a, b)
    a, b = t.wrap(a), t.wrap(b)
    av, bv = a.value, b.value
    return t.record(av * bv, (a, b),
                    lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def matmul(a, b) -> Node:
    t = _tape_of(a, b)
    a, b = t.wrap(a), t.wrap(b)
    av, bv = a.value, b.value

    def back(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return t.record(av @ bv, (a, b), back)


def affine(x, w, b) -> Node:
    return add(matmul(x, w), b)


def leaky_relu(x: Node, slope: float = 0.01) -> Node:
    pos = x.value > 0
    return x.tape.record(np.where(pos, x.value, slope * x.value), (x,),
                         lambda g: (np.where(pos, g, slope * g),))


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(x: Node) -> Node:
    s = _sigmoid(x.value)
    return x.tape.record(s, (x,), lambda g: (g * s * (1.0 - s),))


def log_sigmoid(x: Node) -> Node:
    v = x.value
    out = np.minimum(v, 0.0) - np.log1p(np.exp(-np.abs(v)))
    return x.tape.record(out, (x,), lambda g: (g * _sigmoid(-v),))


def log(x: Node) -> Node:
    v = x.value
    return x.tape.record(np.log(v), (x,), lambda g: (g / v,))


def log1mexp(x: Node) -> Node:
    """log(1 - exp(x)) for x < 0."""
    v = x.value
    out = np.where(v > -0.6931, np.log(-np.expm1(v)), np.log1p(-np.exp(v)))
    return x.tape.record(out, (x,), lambda g: (g * (-1.0 / np.expm1(-v)),))


def clip(x: Node, lo=None, hi=None) -> Node:
    """Clamp values; gradient is zero where the clamp is active."""
    v = x.value
    out = np.clip(v, lo, hi)
    inside = out == v
    return x.tape.record(out, (x,), lambda g: (g * inside,))


def log_softmax(x: Node, axis: int = -1) -> Node:
    v = x.value
    m = v.max(axis=axis, keepdims=True)
    lse = m + np.log(np.exp(v - m).sum(axis=axis, keepdims=True))
    out = v - lse
    p = np.exp(out)
    return x.tape.record(out, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def softmax(x: Node, axis: int = -1) -> Node:
    v = x.value
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    p = e / e.sum(axis=axis, keepdims=True)
    return x.tape.record(p, (x,), lambda g: (p * (g - (g * p).sum(axis=axis, keepdims=True)),))


def sum(x: Node, axis=None) -> Node:  # noqa: A001 - mirrors numpy
    v = x.value
    shape = v.shape

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return x.tape.record(v.sum(axis=axis), (x,), back)


def mean(x: Node, axis=None) -> Node:
    n = x.value.size if axis is None else x.value.shape[axis]
    return mul(sum(x, axis), 1.0 / n)


def take_rows(x: Node, idx: np.ndarray) -> Node:
    """``x[idx]`` along axis 0 (embedding lookup)."""
    v = x.value
    idx = np.asarray(idx)

    def back(g):
        flat = idx.reshape(-1)
        g2 = g.reshape(flat.size, -1)
        # scatter-add as a one-hot product; much faster than ufunc.at here
        onehot = np.zeros((v.shape[0], flat.size))
        onehot[flat, np.arange(flat.size)] = 1.0
        return ((onehot @ g2).reshape(v.shape),)

    return x.tape.record(v[idx], (x,), back)


def pick(x: Node, idx: np.ndarray) -> Node:
    """Row-wise selection ``x[b, idx[b]]`` for a 2-d input."""
    v = x.value
    rows = np.arange(v.shape[0])
    idx = np.asarray(idx)

    def back(g):
        out = np.zeros_like(v)
        out[rows, idx] = g
        return (out,)

    return x.tape.record(v[rows, idx], (x,), back)


def gather2d(x: Node, rows: np.ndarray, cols: np.ndarray) -> Node:
    """``x[rows, cols]`` with broadcasting index arrays."""
    v = x.value
    rows, cols = np.broadcast_arrays(np.asarray(rows), np.asarray(cols))

    def back(g):
        flat = np.bincount((rows * v.shape[1] + cols).ravel(), weights=g.ravel(),
                           minlength=v.size)
        return (flat.reshape(v.shape),)

    return x.tape.record(v[rows, cols], (x,), back)


def straight_through(hard: np.ndarray, soft: Node) -> Node:
    """Forward value ``hard``; gradient flows as if the output were ``soft``."""
    tape = soft.tape
    hard = np.asarray(hard, dtype=np.float64)
    i = len(tape.st_anchors)
    if tape._replay is not None:
        hard0, soft0 = tape._replay[i]
        value = hard0 + (soft.value - soft0)
    else:
        value = hard
    tape.st_anchors.append((value if tape._replay is None else hard0, soft.value))
    return tape.record(value, (soft,), lambda g: (g,))


def prod_complement(m: Node, axis: int = -1) -> Node:
    """``prod(1 - m)`` along ``axis`` with a division-free backward."""
    c = 1.0 - m.value
    c = np.moveaxis(c, axis, -1)
    n = c.shape[-1]
    prefix = np.ones(c.shape[:-1] + (n + 1,))
    suffix = np.ones(c.shape[:-1] + (n + 1,))
    np.cumprod(c, axis=-1, out=prefix[..., 1:])
    np.cumprod(c[..., ::-1], axis=-1, out=suffix[..., 1:])
    out = prefix[..., -1]

    def back(g):
        others = prefix[..., :-1] * suffix[..., -2::-1]
        return (np.moveaxis(-g[..., None] * others, -1, axis),)

    return m.tape.record(out, (m,), back)


def gru_cell(x: Node, h: Node, w: Node, u: Node, b: Node) -> Node:
    """One gated-recurrent step.

    ``w`` is (in, 3H), ``u`` is (H, 3H), ``b`` is (3H,), gate blocks ordered
    update | reset | candidate::

        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        n = tanh(x Wn + (r * h) Un + bn)
        h' = (1 - z) * h + z * n
    """
    xv, hv, wv, uv, bv = x.value, h.value, w.value, u.value, b.value
    H = hv.shape[-1]
    ax = xv @ wv + bv
    azr = ax[:, :2 * H] + hv @ uv[:, :2 * H]
    z = _sigmoid(azr[:, :H])
    r = _sigmoid(azr[:, H:])
    rh = r * hv
    n = np.tanh(ax[:, 2 * H:] + rh @ uv[:, 2 * H:])
    out = (1.0 - z) * hv + z * n

    def back(g):
        gz = g * (n - hv)
        gh = g * (1.0 - z)
        gan = g * z * (1.0 - n * n)
        grh = gan @ uv[:, 2 * H:].T
        gr = grh * hv
        gh = gh + grh * r
        gazr = np.concatenate([gz * z * (1.0 - z), gr * r * (1.0 - r)], axis=1)
        gh = gh + gazr @ uv[:, :2 * H].T
        gax = np.concatenate([gazr, gan], axis=1)
        gu = np.concatenate([hv.T @ gazr, rh.T @ gan], axis=1)
        return gax @ wv.T, gh, xv.T @ gax, gu, gax.sum(axis=0)

    return x.tape.record(out, (x, h, w, u, b), back)


def where(cond: np.ndarray, a, b) -> Node:
    t = _tape_of(a, b)
    a, b = t.wrap(a), t.wrap(b)
    cond = np.asarray(cond, dtype=bool)
    sa, sb = a.shape, b.shape
    return t.record(np.where(cond, a.value, b.value), (a, b),
                    lambda g: (_unbroadcast(np.where(cond, g, 0.0), sa),
                               _unbroadcast(np.where(cond, 0.0, g), sb)))


def square_sum(x: Node) -> Node:
    v = x.value
    return x.tape.record(np.sum(v * v), (x,), lambda g: (2.0 * g * v,))
