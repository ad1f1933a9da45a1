"""A small reverse-mode differentiation engine over dense float64 arrays.

Every primitive creates a :class:`Tensor` that remembers its inputs and an
adjoint rule. Nodes carry a global creation sequence number, and because a
node is always created after its inputs, sorting the reachable nodes by that
number (descending) gives the exact reverse topological order used by
:func:`backward`.

The left operand of :func:`matmul` may be a constant ``scipy.sparse`` matrix
(the normalized adjacency of a GCN layer); it never receives a gradient.
"""
from __future__ import annotations

import itertools

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, ShapeError

__all__ = [
    "Tensor",
    "Parameter",
    "constant",
    "backward",
    "record",
    "PRIMITIVES",
    "matmul",
    "add",
    "sub",
    "mul",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "power",
    "tsum",
    "mean",
    "row_normalize",
    "pairwise_sq_dist",
    "gather_pairs",
    "batch_center",
    "trace_normalize",
    "ns_iteration_step",
    "clamp",
    "transpose",
]

_seq = itertools.count()


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "op", "seq", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None, op="leaf", requires_grad=False, name=None):
        if not sp.issparse(value):
            value = np.asarray(value, dtype=np.float64)
        self.value = value
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.op = op
        self.seq = next(_seq)
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in self.parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def numpy(self) -> np.ndarray:
        return np.array(self.value, copy=True)

    def item(self) -> float:
        return float(np.asarray(self.value).reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    # operator sugar -------------------------------------------------------
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
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __rtruediv__(self, other):
        return mul(other, power(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Parameter(Tensor):
    """A trainable leaf; ``grad`` always has the shape of ``value`` after backward."""

    __slots__ = ()

    def __init__(self, value, name=None):
        super().__init__(np.array(value, dtype=np.float64, copy=True), requires_grad=True, name=name)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


def constant(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss: Tensor, params=()) -> None:
    """Accumulate ``d loss / d leaf`` into the ``grad`` of every reachable leaf.

    Parameters listed in ``params`` that the loss does not depend on get a zero
    gradient, so every parameter's gradient is populated afterwards.
    """
    if np.asarray(loss.value).size != 1:
        raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        nodes.append(node)
        stack.extend(node.parents)
    nodes.sort(key=lambda t: t.seq, reverse=True)
    adjoint = {id(loss): np.ones_like(np.asarray(loss.value))}
    for node in nodes:
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + pg
            else:
                adjoint[key] = pg
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.value)


# ---------------------------------------------------------------------------
# primitives


def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shape mismatch {av.shape} @ {bv.shape}")
    if sp.issparse(av):
        if a.requires_grad:
            raise ContractError("sparse matmul operand must be constant")
        out = np.asarray(av @ bv)

        def bw(g):
            return None, np.asarray(av.T @ g)
    else:
        out = av @ bv

        def bw(g):
            return g @ bv.T, av.T @ g
    return Tensor(out, (a, b), bw, "matmul")


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = a.value + b.value

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return Tensor(out, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = a.value - b.value

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return Tensor(out, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    av, bv = a.value, b.value
    out = av * bv

    def bw(g):
        return _unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)
    return Tensor(out, (a, b), bw, "mul")


def relu(x) -> Tensor:
    x = _t(x)
    mask = x.value > 0
    return Tensor(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x) -> Tensor:
    x = _t(x)
    v = x.value
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return Tensor(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def exp(x) -> Tensor:
    x = _t(x)
    out = np.exp(x.value)
    return Tensor(out, (x,), lambda g: (g * out,), "exp")


def log(x) -> Tensor:
    x = _t(x)
    v = x.value
    return Tensor(np.log(v), (x,), lambda g: (g / v,), "log")


def power(x, p: float) -> Tensor:
    """Elementwise ``x ** p`` for a constant exponent."""
    x = _t(x)
    v = x.value
    p = float(p)
    out = v ** p
    return Tensor(out, (x,), lambda g: (g * p * v ** (p - 1.0),), "pow")


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = _t(x)
    shape = x.shape
    out = x.value.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)
    return Tensor(out, (x,), bw, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = _t(x)
    count = x.value.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis, keepdims), 1.0 / count)


def transpose(x) -> Tensor:
    x = _t(x)
    return Tensor(x.value.T.copy(), (x,), lambda g: (g.T,), "transpose")


def row_normalize(x, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit Euclidean norm."""
    x = _t(x)
    norm = np.maximum(np.linalg.norm(x.value, axis=1, keepdims=True), eps)
    out = x.value / norm

    def bw(g):
        return ((g - out * (out * g).sum(axis=1, keepdims=True)) / norm,)
    return Tensor(out, (x,), bw, "row_normalize")


def pairwise_sq_dist(x) -> Tensor:
    """All-pairs squared Euclidean distances (direct differences, exact zeros on the diagonal)."""
    x = _t(x)
    v = x.value
    diff = v[:, None, :] - v[None, :, :]
    out = (diff ** 2).sum(axis=-1)

    def bw(g):
        s = g + g.T
        return (2.0 * (s.sum(axis=1)[:, None] * v - s @ v),)
    return Tensor(out, (x,), bw, "pairwise_sq_dist")


def gather_pairs(x, i, j) -> Tensor:
    """Row differences ``x[i] - x[j]`` for index arrays ``i``, ``j``."""
    x = _t(x)
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    n, p = x.shape
    out = x.value[i] - x.value[j]

    def bw(g):
        grad = np.empty((n, p))
        for c in range(p):
            grad[:, c] = np.bincount(i, weights=g[:, c], minlength=n) - np.bincount(
                j, weights=g[:, c], minlength=n
            )
        return (grad,)
    return Tensor(out, (x,), bw, "gather_pairs")


def batch_center(x) -> Tensor:
    x = _t(x)
    out = x.value - x.value.mean(axis=0, keepdims=True)
    return Tensor(out, (x,), lambda g: (g - g.mean(axis=0, keepdims=True),), "batch_center")


def trace_normalize(s) -> Tensor:
    s = _t(s)
    tr = np.trace(s.value)
    out = s.value / tr

    def bw(g):
        return (g / tr - (g * s.value).sum() / tr ** 2 * np.eye(s.shape[0]),)
    return Tensor(out, (s,), bw, "trace_normalize")


def ns_iteration_step(p, s) -> Tensor:
    """One Newton-Schulz step ``1.5 P - 0.5 P^3 S`` toward ``S^{-1/2}``."""
    p, s = _t(p), _t(s)
    pv, sv = p.value, s.value
    pp = pv @ pv
    ppp = pp @ pv
    out = 1.5 * pv - 0.5 * ppp @ sv

    def bw(g):
        gm = -0.5 * g
        ps = pv @ sv
        gp = 1.5 * g + gm @ (pp @ sv).T + pv.T @ gm @ ps.T + pp.T @ gm @ sv.T
        gs = ppp.T @ gm
        return gp, gs
    return Tensor(out, (p, s), bw, "ns_iteration_step")


def clamp(x, lo=-np.inf, hi=np.inf) -> Tensor:
    x = _t(x)
    v = x.value
    mask = (v >= lo) & (v <= hi)
    return Tensor(np.clip(v, lo, hi), (x,), lambda g: (g * mask,), "clamp")


PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "relu": relu,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "pow": power,
    "sum": tsum,
    "mean": mean,
    "row_normalize": row_normalize,
    "pairwise_sq_dist": pairwise_sq_dist,
    "gather_pairs": gather_pairs,
    "batch_center": batch_center,
    "trace_normalize": trace_normalize,
    "ns_iteration_step": ns_iteration_step,
    "clamp": clamp,
    "transpose": transpose,
}


def record(op: str, *inputs, **kwargs) -> Tensor:
    """Apply the named primitive; the result is recorded for :func:`backward`."""
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        raise ContractError(f"unknown primitive {op!r}") from None
    return fn(*inputs, **kwargs)
