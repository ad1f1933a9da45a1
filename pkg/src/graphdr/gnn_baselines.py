"""GNN embedding baselines sharing the two-layer GCN encoder: GAE, VGAE, GRACE, CCA-SSG."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .datasets import GraphDataset
from .errors import ConnectivityError, ContractError, DivergenceError
from .graph import SparseGraph, negative_edge_sample, normalized_adjacency
from .nn import AdamState, GcnEncoder, adam_step, gcn_forward, init_weights
from .numerics import make_rng
from .results import EmbeddingResult, config_digest

__all__ = [
    "AugmentConfig",
    "ContrastConfig",
    "GaeConfig",
    "augment_graph",
    "gae_loss",
    "vgae_kl",
    "grace_loss",
    "ccassg_loss",
    "gae_train",
    "vgae_train",
    "grace_train",
    "ccassg_train",
]

LOG_EPS = 1e-15
STD_EPS = 1e-8


@dataclass(frozen=True)
class AugmentConfig:
    p_edge_drop: float = 0.2
    p_feat_mask: float = 0.2

    def __post_init__(self):
        for name in ("p_edge_drop", "p_feat_mask"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class GaeConfig:
    epochs: int = 400
    lr: float = 0.01
    hidden: int = 64
    out_dim: int = 2
    init_scheme: str = "xavier_uniform"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class ContrastConfig:
    tau: float = 0.5
    lam: float = 1e-3
    epochs: int = 200
    lr: float = 0.01
    hidden: int = 64
    out_dim: int = 2
    init_scheme: str = "xavier_uniform"
    seed: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ContractError(f"tau must be positive, got {self.tau}")
        if self.lam < 0:
            raise ContractError(f"lambda must be nonnegative, got {self.lam}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")


def augment_graph(ds: GraphDataset, cfg: AugmentConfig, rng: np.random.Generator) -> GraphDataset:
    """Drop undirected edges with prob ``p_edge_drop`` and zero whole feature columns with prob ``p_feat_mask``."""
    pairs, weights = ds.graph.edge_list()
    keep = rng.random(len(pairs)) >= cfg.p_edge_drop
    graph = SparseGraph.from_edges(ds.graph.n, pairs[keep], weights[keep])
    mask = rng.random(ds.features.shape[1]) >= cfg.p_feat_mask
    features = ds.features * mask
    return replace(ds, graph=graph, features=features)


# ---------------------------------------------------------------------------
# losses (tape-recorded)


def _sigmoid_inner(z: ad.Tensor, i, j) -> ad.Tensor:
    zi = _rows(z, i)
    zj = _rows(z, j)
    return ad.sigmoid(ad.tsum(ad.mul(zi, zj), axis=1))


def _rows(z: ad.Tensor, idx) -> ad.Tensor:
    # row gather as a constant sparse selection matrix
    idx = np.asarray(idx, dtype=np.int64)
    sel = sp.csr_matrix((np.ones(len(idx)), (np.arange(len(idx)), idx)), shape=(len(idx), z.shape[0]))
    return ad.matmul(sel, z)


def gae_loss(z, pos, neg) -> ad.Tensor:
    """Mean positive plus mean negative binary cross-entropy of the inner-product decoder."""
    z = ad.constant(z)
    pos = np.asarray(pos, dtype=np.int64).reshape(-1, 2)
    neg = np.asarray(neg, dtype=np.int64).reshape(-1, 2)
    qp = _sigmoid_inner(z, pos[:, 0], pos[:, 1])
    qn = _sigmoid_inner(z, neg[:, 0], neg[:, 1])
    lp = ad.mean(ad.log(ad.add(qp, LOG_EPS)))
    ln = ad.mean(ad.log(ad.add(ad.sub(1.0, qn), LOG_EPS)))
    return ad.mul(ad.add(lp, ln), -1.0)


def vgae_kl(mu, logstd) -> ad.Tensor:
    """``-(1/2n) sum(1 + 2 log s - mu^2 - s^2)``."""
    mu, logstd = ad.constant(mu), ad.constant(logstd)
    n = mu.shape[0]
    inner = ad.sub(ad.sub(ad.add(ad.mul(logstd, 2.0), 1.0), ad.mul(mu, mu)), ad.exp(ad.mul(logstd, 2.0)))
    return ad.mul(ad.tsum(inner), -0.5 / n)


def _half_infonce(su_v, su_u, tau: float) -> ad.Tensor:
    n = su_v.shape[0]
    eye = np.eye(n)
    pos = ad.tsum(ad.mul(su_v, eye), axis=1)
    e_uv = ad.exp(ad.mul(su_v, 1.0 / tau))
    e_uu = ad.mul(ad.exp(ad.mul(su_u, 1.0 / tau)), 1.0 - eye)
    denom = ad.add(ad.tsum(e_uv, axis=1), ad.tsum(e_uu, axis=1))
    return ad.sub(ad.log(denom), ad.mul(pos, 1.0 / tau))


def grace_loss(u, v, tau: float) -> ad.Tensor:
    """Symmetrized InfoNCE over cosine similarities with inter- and intra-view negatives."""
    un = ad.row_normalize(ad.constant(u))
    vn = ad.row_normalize(ad.constant(v))
    s_uv = ad.matmul(un, ad.transpose(vn))
    s_vu = ad.transpose(s_uv)
    s_uu = ad.matmul(un, ad.transpose(un))
    s_vv = ad.matmul(vn, ad.transpose(vn))
    n = s_uv.shape[0]
    total = ad.add(ad.tsum(_half_infonce(s_uv, s_uu, tau)), ad.tsum(_half_infonce(s_vu, s_vv, tau)))
    return ad.mul(total, 1.0 / (2 * n))


def _standardize(h: ad.Tensor) -> ad.Tensor:
    n = h.shape[0]
    hc = ad.batch_center(h)
    var = ad.mean(ad.mul(hc, hc), axis=0, keepdims=True)
    return ad.mul(ad.mul(hc, ad.power(ad.add(var, STD_EPS), -0.5)), 1.0 / np.sqrt(n))


def ccassg_loss(u, v, lam: float, standardize: bool = True) -> ad.Tensor:
    """``sum ||u_i - v_i||^2 + lam (||U'U - I||^2 + ||V'V - I||^2)`` on standardized views."""
    u, v = ad.constant(u), ad.constant(v)
    if standardize:
        u, v = _standardize(u), _standardize(v)
    d = u.shape[1]
    eye = np.eye(d)
    diff = ad.sub(u, v)
    inv = ad.tsum(ad.mul(diff, diff))
    cu = ad.sub(ad.matmul(ad.transpose(u), u), eye)
    cv = ad.sub(ad.matmul(ad.transpose(v), v), eye)
    dec = ad.add(ad.tsum(ad.mul(cu, cu)), ad.tsum(ad.mul(cv, cv)))
    return ad.add(inv, ad.mul(dec, lam))


# ---------------------------------------------------------------------------
# trainers


def _check_connected(g: SparseGraph) -> None:
    if not g.is_connected():
        raise ConnectivityError(f"graph has {g.n_components()} connected components")


def _result(emb, method, cfg, trace, start) -> EmbeddingResult:
    if not np.all(np.isfinite(emb)):
        raise DivergenceError(len(trace), "non-finite embedding")
    return EmbeddingResult(emb, method, config_digest({"method": method, "config": cfg}), cfg.seed,
                           trace, time.perf_counter() - start)


def _step(loss: ad.Tensor, params, opt, trace, epoch) -> None:
    value = loss.item()
    if not np.isfinite(value):
        raise DivergenceError(epoch)
    trace.append(value)
    ad.backward(loss, params)
    adam_step(opt, params)


def gae_train(ds: GraphDataset, cfg: GaeConfig | None = None) -> EmbeddingResult:
    cfg = cfg or GaeConfig()
    _check_connected(ds.graph)
    start = time.perf_counter()
    rng = make_rng(cfg.seed)
    enc = GcnEncoder(ds.graph, ds.features.shape[1], cfg.hidden, cfg.out_dim, rng=rng, init=cfg.init_scheme)
    params = enc.parameters()
    opt = AdamState(lr=cfg.lr)
    pos, _ = ds.graph.edge_list()
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        neg = negative_edge_sample(ds.graph, len(pos), rng)
        _step(gae_loss(gcn_forward(enc, ds.features), pos, neg), params, opt, trace, epoch)
    return _result(gcn_forward(enc, ds.features).numpy(), "gae", cfg, trace, start)


def vgae_train(ds: GraphDataset, cfg: GaeConfig | None = None) -> EmbeddingResult:
    cfg = cfg or GaeConfig()
    _check_connected(ds.graph)
    start = time.perf_counter()
    rng = make_rng(cfg.seed)
    enc = GcnEncoder(ds.graph, ds.features.shape[1], cfg.hidden, cfg.out_dim, rng=rng, init=cfg.init_scheme)
    w_logstd = ad.Parameter(init_weights((cfg.hidden, cfg.out_dim), cfg.init_scheme, rng), name="w_logstd")
    params = enc.parameters() + [w_logstd]
    opt = AdamState(lr=cfg.lr)
    adj = enc.norm_adj
    pos, _ = ds.graph.edge_list()
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        neg = negative_edge_sample(ds.graph, len(pos), rng)
        xi = rng.standard_normal((ds.n, cfg.out_dim))
        h = enc.hidden(ds.features)
        mu = ad.matmul(adj, ad.matmul(h, enc.w1))
        logstd = ad.matmul(adj, ad.matmul(h, w_logstd))
        z = ad.add(mu, ad.mul(ad.exp(logstd), xi))
        loss = ad.add(gae_loss(z, pos, neg), vgae_kl(mu, logstd))
        _step(loss, params, opt, trace, epoch)
    return _result(gcn_forward(enc, ds.features).numpy(), "vgae", cfg, trace, start)


def _two_view_train(ds, aug, cfg, method, loss_fn) -> EmbeddingResult:
    aug = aug or AugmentConfig()
    cfg = cfg or ContrastConfig()
    start = time.perf_counter()
    rng = make_rng(cfg.seed)
    enc = GcnEncoder(ds.graph, ds.features.shape[1], cfg.hidden, cfg.out_dim, rng=rng, init=cfg.init_scheme)
    params = enc.parameters()
    opt = AdamState(lr=cfg.lr)
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        v1 = augment_graph(ds, aug, rng)
        v2 = augment_graph(ds, aug, rng)
        a1 = normalized_adjacency(v1.graph, add_self_loops=True, sparse=True)
        a2 = normalized_adjacency(v2.graph, add_self_loops=True, sparse=True)
        u = gcn_forward(enc, v1.features, a1)
        v = gcn_forward(enc, v2.features, a2)
        _step(loss_fn(u, v, cfg), params, opt, trace, epoch)
    digest_cfg = {"augment": aug, "contrast": cfg}
    emb = gcn_forward(enc, ds.features).numpy()
    res = _result(emb, method, cfg, trace, start)
    res.config_digest = config_digest({"method": method, "config": digest_cfg})
    return res


def grace_train(ds: GraphDataset, aug: AugmentConfig | None = None, cfg: ContrastConfig | None = None) -> EmbeddingResult:
    return _two_view_train(ds, aug, cfg, "grace", lambda u, v, c: grace_loss(u, v, c.tau))


def ccassg_train(ds: GraphDataset, aug: AugmentConfig | None = None, cfg: ContrastConfig | None = None) -> EmbeddingResult:
    return _two_view_train(ds, aug, cfg, "ccassg", lambda u, v, c: ccassg_loss(u, v, c.lam))
