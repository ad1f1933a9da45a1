"""Layers and optimizer built on :mod:`graphdr.autodiff`: GCN encoder, whitening layer, Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .errors import ContractError, ShapeError
from .graph import SparseGraph, normalized_adjacency

__all__ = ["init_weights", "AdamState", "adam_step", "GcnEncoder", "gcn_forward", "dbn_forward"]

INIT_SCHEMES = ("normal", "xavier_uniform", "xavier_normal")
NORMAL_INIT_STD = 0.01


def init_weights(shape, scheme: str, rng: np.random.Generator) -> np.ndarray:
    """Draw an initial weight matrix.

    Args:
        shape: ``(fan_in, fan_out)``.
        scheme: ``normal`` (std 0.01), ``xavier_uniform`` or ``xavier_normal``.
        rng: generator from :func:`graphdr.numerics.make_rng`.
    """
    fan_in, fan_out = int(shape[0]), int(shape[1])
    if scheme == "normal":
        return rng.normal(0.0, NORMAL_INIT_STD, size=(fan_in, fan_out))
    if scheme == "xavier_uniform":
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))
    if scheme == "xavier_normal":
        return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))
    raise ContractError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state: AdamState, params) -> None:
    """One bias-corrected Adam update in place; gradients are zeroed afterwards."""
    if not state.m:
        state.m = [np.zeros_like(p.value) for p in params]
        state.v = [np.zeros_like(p.value) for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for k, p in enumerate(params):
        g = p.grad if p.grad is not None else np.zeros_like(p.value)
        m = state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        p.value = p.value - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.zero_grad()


class GcnEncoder:
    """Two-layer graph convolution ``Ã ReLU(Ã X W0) W1`` without biases."""

    def __init__(self, graph_or_adj, in_dim: int, hidden: int = 64, out_dim: int = 2,
                 rng: np.random.Generator | None = None, init: str = "xavier_uniform"):
        if rng is None:
            raise ContractError("GcnEncoder needs an rng")
        if isinstance(graph_or_adj, SparseGraph):
            self.norm_adj = normalized_adjacency(graph_or_adj, add_self_loops=True, sparse=True)
        else:
            self.norm_adj = sp.csr_matrix(graph_or_adj, dtype=np.float64)
        self.w0 = ad.Parameter(init_weights((in_dim, hidden), init, rng), name="w0")
        self.w1 = ad.Parameter(init_weights((hidden, out_dim), init, rng), name="w1")

    @property
    def layers(self):
        return [self.w0, self.w1]

    def parameters(self):
        return [self.w0, self.w1]

    def hidden(self, x, adj=None) -> ad.Tensor:
        adj = self.norm_adj if adj is None else adj
        return ad.relu(ad.matmul(adj, ad.matmul(x, self.w0)))

    def __call__(self, x, adj=None) -> ad.Tensor:
        return gcn_forward(self, x, adj)


def gcn_forward(enc: GcnEncoder, x, adj=None) -> ad.Tensor:
    """Record the two-layer GCN on the tape. ``adj`` overrides the cached Ã (augmented views)."""
    x = ad.constant(x)
    if x.shape[1] != enc.w0.shape[0]:
        raise ShapeError(f"features have {x.shape[1]} columns, encoder expects {enc.w0.shape[0]}")
    adj = enc.norm_adj if adj is None else adj
    if adj.shape[0] != x.shape[0]:
        raise ShapeError(f"adjacency is {adj.shape}, features have {x.shape[0]} rows")
    return ad.matmul(adj, ad.matmul(enc.hidden(x, adj), enc.w1))


def dbn_forward(y, eps: float = 1e-5, iters: int = 8) -> ad.Tensor:
    """Whiten ``y``: center it, then multiply by ``(cov + eps I)^(-1/2)``.

    The inverse square root comes from Newton-Schulz iterations on the
    trace-normalized covariance, so only matmuls are recorded.
    """
    y = ad.constant(y)
    n, d = y.shape
    if n < 2:
        raise ContractError(f"whitening needs at least 2 rows, got {n}")
    yc = ad.batch_center(y)
    cov = ad.add(ad.mul(ad.matmul(ad.transpose(yc), yc), 1.0 / n), eps * np.eye(d))
    tr = ad.tsum(ad.mul(cov, np.eye(d)))
    s_norm = ad.trace_normalize(cov)
    p = ad.constant(np.eye(d))
    for _ in range(iters):
        p = ad.ns_iteration_step(p, s_norm)
    w = ad.mul(p, ad.power(tr, -0.5))
    return ad.matmul(yc, w)
