"""GNUMAP: a GCN encoder trained with a UMAP-style cross-entropy on the observed graph.

Each epoch encodes the node features with a two-layer GCN, whitens the
output, and scores every stored edge plus an equal number of freshly sampled
non-edges with the low-dimensional connection probability
``q = 1 / (1 + alpha * d^(2 beta))``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .datasets import GraphDataset
from .errors import ConnectivityError, ContractError, DivergenceError
from .graph import SparseGraph, negative_edge_sample
from .nn import AdamState, GcnEncoder, adam_step, dbn_forward, gcn_forward
from .numerics import make_rng
from .results import EmbeddingResult, config_digest

__all__ = [
    "GnumapConfig",
    "low_dim_probability",
    "cross_entropy_loss",
    "gnumap_loss_at",
    "gnumap_train",
]

SQ_DIST_FLOOR = 1e-12


@dataclass(frozen=True)
class GnumapConfig:
    alpha: float = 1.57
    beta: float = 0.89
    epochs: int = 400
    lr: float = 0.01
    hidden: int = 64
    out_dim: int = 2
    dbn_eps: float = 1e-5
    dbn_iters: int = 8
    ce_eps: float = 1e-7
    init_scheme: str = "xavier_uniform"
    seed: int = 0
    use_dbn: bool = True

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ContractError("alpha and beta must be positive")
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if self.out_dim < 1 or self.hidden < 1:
            raise ContractError("hidden and out_dim must be >= 1")


def low_dim_probability(d, alpha: float = 1.57, beta: float = 0.89):
    """``1 / (1 + alpha * d^(2 beta))`` for Euclidean distances ``d >= 0``."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ContractError("distances must be nonnegative")
    return 1.0 / (1.0 + alpha * d ** (2.0 * beta))


def cross_entropy_loss(p, q, eps: float = 1e-7) -> float:
    """Summed binary cross-entropy ``-sum(p log q + (1-p) log(1-q))`` with q clamped."""
    p = np.asarray(p, dtype=np.float64)
    q = np.clip(np.asarray(q, dtype=np.float64), eps, 1.0 - eps)
    return float(-(p * np.log(q) + (1.0 - p) * np.log1p(-q)).sum())


def _pair_loss(y: ad.Tensor, i, j, p, alpha, beta, eps) -> ad.Tensor:
    diff = ad.gather_pairs(y, i, j)
    sq = ad.clamp(ad.tsum(ad.mul(diff, diff), axis=1), SQ_DIST_FLOOR)
    # d^(2 beta) with d Euclidean equals (d^2)^beta
    q = ad.power(ad.add(ad.mul(ad.power(sq, beta), alpha), 1.0), -1.0)
    q = ad.clamp(q, eps, 1.0 - eps)
    ll = ad.add(ad.mul(ad.log(q), p), ad.mul(ad.log(ad.sub(1.0, q)), 1.0 - p))
    return ad.mul(ad.tsum(ll), -1.0)


def _pair_weights(graph: SparseGraph, i, j) -> np.ndarray:
    csr = graph.to_scipy()
    return np.asarray(csr[np.asarray(i), np.asarray(j)]).reshape(-1)


def gnumap_loss_at(embedding, graph: SparseGraph, pairs, cfg: GnumapConfig | None = None) -> float:
    """Cross-entropy of an embedding over a fixed pair list (no sampling).

    The target of each pair is its adjacency weight (0 for non-edges).
    """
    cfg = cfg or GnumapConfig()
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    y = np.asarray(embedding, dtype=np.float64)
    p = _pair_weights(graph, pairs[:, 0], pairs[:, 1])
    d = np.sqrt(np.maximum(((y[pairs[:, 0]] - y[pairs[:, 1]]) ** 2).sum(axis=1), SQ_DIST_FLOOR))
    return cross_entropy_loss(p, low_dim_probability(d, cfg.alpha, cfg.beta), cfg.ce_eps)


def gnumap_train(ds: GraphDataset, cfg: GnumapConfig | None = None) -> EmbeddingResult:
    """Train GNUMAP on a connected featured graph and return the whitened embedding."""
    cfg = cfg or GnumapConfig()
    g = ds.graph
    if not g.is_connected():
        raise ConnectivityError(f"graph has {g.n_components()} connected components")
    start = time.perf_counter()
    rng = make_rng(cfg.seed)
    enc = GcnEncoder(g, ds.features.shape[1], cfg.hidden, cfg.out_dim, rng=rng, init=cfg.init_scheme)
    params = enc.parameters()
    opt = AdamState(lr=cfg.lr)
    x = ad.constant(ds.features)

    pos, pos_p = g.directed_pairs()
    pos_i, pos_j = pos[:, 0], pos[:, 1]
    n_pos = len(pos_i)
    trace = []
    y = None
    for epoch in range(1, cfg.epochs + 1):
        neg = negative_edge_sample(g, n_pos, rng)
        i = np.concatenate([pos_i, neg[:, 0]])
        j = np.concatenate([pos_j, neg[:, 1]])
        p = np.concatenate([pos_p, np.zeros(len(neg))])
        y = gcn_forward(enc, x)
        if cfg.use_dbn:
            y = dbn_forward(y, cfg.dbn_eps, cfg.dbn_iters)
        loss = _pair_loss(y, i, j, p, cfg.alpha, cfg.beta, cfg.ce_eps)
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(epoch)
        trace.append(value)
        ad.backward(loss, params)
        adam_step(opt, params)

    # embedding from the final parameters
    y = gcn_forward(enc, x)
    if cfg.use_dbn:
        y = dbn_forward(y, cfg.dbn_eps, cfg.dbn_iters)
    emb = y.numpy()
    if not np.all(np.isfinite(emb)):
        raise DivergenceError(cfg.epochs, "non-finite embedding")
    return EmbeddingResult(
        embedding=emb,
        method="gnumap",
        config_digest=config_digest(cfg),
        seed=cfg.seed,
        loss_trace=trace,
        wall_seconds=time.perf_counter() - start,
    )
