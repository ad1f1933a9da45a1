"""Classical dimensionality reduction baselines.

PCA, Isomap, LLE and Laplacian eigenmaps are closed-form spectral methods.
t-SNE, UMAP and DensMAP are iterative; their objectives are recorded on the
:mod:`graphdr.autodiff` tape, so the gradients are the same ones the
finite-difference suite checks.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit

from . import autodiff as ad
from .errors import CalibrationError, ConnectivityError, ContractError, DegenerateDegreeError
from .gnumap import _pair_loss
from .graph import (
    SparseGraph,
    edge_lengths_from_coords,
    knn_graph,
    negative_edge_sample,
    shortest_paths,
    spectral_embedding,
)
from .nn import AdamState, adam_step
from .numerics import fix_column_signs, make_rng, pairwise_sq_distances, solve_linear, svd_thin, symmetric_eig
from .results import EmbeddingResult, config_digest

__all__ = [
    "PerplexityCalibration",
    "FuzzyGraph",
    "pca",
    "isomap",
    "lle",
    "laplacian_eigenmap",
    "calibrate_perplexity",
    "tsne_affinities",
    "tsne_kl_loss",
    "tsne",
    "solve_umap_sigma",
    "fuzzy_graph",
    "fit_ab",
    "umap_euclidean",
    "local_radius",
    "densmap_loss",
    "densmap",
]

RADIUS_FLOOR = 1e-12


def _coords(data) -> np.ndarray:
    x = getattr(data, "coords", data)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError(f"expected a 2-D coordinate array, got shape {x.shape}")
    return x


def _result(emb, method, params, seed, start, trace=None) -> EmbeddingResult:
    return EmbeddingResult(
        embedding=np.asarray(emb, dtype=np.float64),
        method=method,
        config_digest=config_digest({"method": method, **params}),
        seed=int(seed),
        loss_trace=list(trace or []),
        wall_seconds=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# spectral methods


def pca(x, q: int = 2, standardize: bool = True) -> EmbeddingResult:
    """Principal component scores ``U_q S_q``.

    Columns are centered, and scaled to unit (sample) standard deviation when
    ``standardize`` is set; constant columns are only centered. Each
    component's largest-magnitude loading is positive.
    """
    start = time.perf_counter()
    x = _coords(x)
    n, p = x.shape
    if not 1 <= q <= min(n, p):
        raise ContractError(f"q={q} outside [1, {min(n, p)}]")
    z = x - x.mean(axis=0)
    if standardize and n > 1:
        sd = z.std(axis=0, ddof=1)
        sd[sd == 0] = 1.0
        z = z / sd
    u, s, v = svd_thin(z, q)
    signs = np.sign(v[np.argmax(np.abs(v), axis=0), np.arange(q)])
    signs[signs == 0] = 1.0
    scores = (u * s) * signs
    return _result(scores, "pca", {"q": q, "standardize": standardize}, 0, start)


def _mds(d2: np.ndarray, q: int) -> np.ndarray:
    n = d2.shape[0]
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ d2 @ j
    eig = symmetric_eig(0.5 * (b + b.T))
    order = np.argsort(eig.values, kind="stable")[::-1][:q]
    lam = np.clip(eig.values[order], 0.0, None)
    return fix_column_signs(eig.vectors[:, order]) * np.sqrt(lam)


def isomap(data, q: int = 2, k: int = 10, graph: SparseGraph | None = None) -> EmbeddingResult:
    """Classical MDS on Euclidean-weighted shortest-path distances of a k-NN graph."""
    start = time.perf_counter()
    x = _coords(data)
    g = graph if graph is not None else knn_graph(x, k)
    if not g.is_connected():
        raise ConnectivityError(f"neighbourhood graph has {g.n_components()} components")
    dist = shortest_paths(g, edge_length="euclidean", lengths=edge_lengths_from_coords(g, x))
    emb = _mds(dist ** 2, q)
    return _result(emb, "isomap", {"q": q, "k": k, "graph": graph is not None}, 0, start)


def lle_weights(x, k: int, ridge: float = 1e-3) -> np.ndarray:
    """Dense ``n x n`` reconstruction weights; each row sums to 1 over its k neighbours."""
    x = _coords(x)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ContractError(f"k={k} must satisfy 1 <= k < n={n}")
    d2 = pairwise_sq_distances(x)
    np.fill_diagonal(d2, np.inf)
    nbrs = np.argsort(d2, axis=1, kind="stable")[:, :k]
    w = np.zeros((n, n))
    for i in range(n):
        z = x[nbrs[i]] - x[i]
        gram = z @ z.T
        reg = ridge * np.trace(gram) / k
        if reg == 0:
            reg = ridge
        wi = solve_linear(gram + reg * np.eye(k), np.ones(k))
        w[i, nbrs[i]] = wi / wi.sum()
    return w


def lle(data, k: int = 12, q: int = 2, ridge: float = 1e-3) -> EmbeddingResult:
    """Locally linear embedding: bottom non-constant eigenvectors of ``(I-W)'(I-W)``."""
    start = time.perf_counter()
    x = _coords(data)
    if k < q + 1:
        raise ContractError(f"k={k} must be at least q+1={q + 1}")
    w = lle_weights(x, k, ridge)
    m = np.eye(x.shape[0]) - w
    eig = symmetric_eig(m.T @ m)
    emb = fix_column_signs(eig.vectors[:, 1:q + 1])
    return _result(emb, "lle", {"q": q, "k": k, "ridge": ridge}, 0, start)


def laplacian_eigenmap(g: SparseGraph, q: int = 2, heat_t: float | None = None, points=None) -> EmbeddingResult:
    """Spectral embedding of ``g``; with ``heat_t`` the edges are reweighted by ``exp(-|xi-xj|^2 / t)``."""
    start = time.perf_counter()
    if heat_t is not None and np.isfinite(heat_t):
        if points is None:
            raise ContractError("heat-kernel weights need `points`")
        pairs, _ = g.edge_list()
        x = _coords(points)
        d2 = ((x[pairs[:, 0]] - x[pairs[:, 1]]) ** 2).sum(axis=1)
        weights = np.maximum(np.exp(-d2 / heat_t), np.finfo(np.float64).tiny)
        g = SparseGraph.from_edges(g.n, pairs, weights)
    emb = spectral_embedding(g, q)
    return _result(emb, "laplacian_eigenmap", {"q": q, "heat_t": heat_t}, 0, start)


# ---------------------------------------------------------------------------
# t-SNE


@dataclass
class PerplexityCalibration:
    sigmas: np.ndarray
    conditional: np.ndarray


def _row_entropy(d2_row: np.ndarray, beta: float):
    # conditional row for precision beta = 1 / (2 sigma^2); entropy in bits
    shifted = d2_row - d2_row.min()
    w = np.exp(-shifted * beta)
    total = w.sum()
    p = w / total
    h = np.log(total) + beta * (shifted * p).sum()
    return p, h / np.log(2.0)


def calibrate_perplexity(x, perplexity: float = 30.0, tol: float = 1e-6, max_iter: int = 200) -> PerplexityCalibration:
    """Per-row bisection for the Gaussian bandwidth whose conditional has the target perplexity.

    A row whose distances are all equal is uniform for every bandwidth; it is
    returned as is with perplexity ``n - 1``.
    """
    x = _coords(x)
    n = x.shape[0]
    if not 1.0 < perplexity < n - 1:
        raise ContractError(f"perplexity must lie in (1, {n - 1}), got {perplexity}")
    d2 = pairwise_sq_distances(x)
    cond = np.zeros((n, n))
    sigmas = np.empty(n)
    for i in range(n):
        row = np.delete(d2[i], i)
        if np.ptp(row) == 0:
            p = np.full(n - 1, 1.0 / (n - 1))
            beta = 1.0
        else:
            beta, lo, hi = 1.0 / max(np.median(row), 1e-300), 0.0, np.inf
            for _ in range(max_iter):
                p, h = _row_entropy(row, beta)
                if abs(2.0 ** h - perplexity) < tol:
                    break
                if 2.0 ** h > perplexity:
                    lo = beta
                    beta = beta * 2.0 if hi == np.inf else 0.5 * (lo + hi)
                else:
                    hi = beta
                    beta = 0.5 * (lo + hi)
            else:
                raise CalibrationError(i, f"perplexity search did not converge in {max_iter} steps")
        cond[i, np.arange(n) != i] = p
        sigmas[i] = np.sqrt(0.5 / beta)
    return PerplexityCalibration(sigmas, cond)


def tsne_affinities(x, perplexity: float = 30.0) -> np.ndarray:
    """Symmetric joint probabilities ``(p_j|i + p_i|j) / 2n``."""
    cond = calibrate_perplexity(x, perplexity).conditional
    return (cond + cond.T) / (2.0 * cond.shape[0])


def tsne_kl_loss(y, p: np.ndarray, exaggeration: float = 1.0) -> ad.Tensor:
    """``KL(P || Q)`` with Student-t ``Q``; the constant ``sum p log p`` is included.

    With ``exaggeration`` ``c``, ``P`` is replaced by ``cP`` in the attractive
    term only, which gives the usual exaggerated gradient.
    """
    y = ad.constant(y)
    n = y.shape[0]
    d = ad.pairwise_sq_dist(y)
    log1p_d = ad.log(ad.add(d, 1.0))
    w = ad.mul(ad.power(ad.add(d, 1.0), -1.0), 1.0 - np.eye(n))
    log_z = ad.log(ad.tsum(w))
    pos = p > 0
    const = float((p[pos] * np.log(p[pos])).sum())
    attract = ad.tsum(ad.mul(log1p_d, exaggeration * p))
    return ad.add(ad.add(attract, ad.mul(log_z, float(p.sum()))), const)


def tsne(data, q: int = 2, perplexity: float = 30.0, iters: int = 1000, seed: int = 0,
         lr: float = 200.0, exaggeration: float = 12.0) -> EmbeddingResult:
    """Exact t-SNE with early exaggeration and momentum gradient descent."""
    start = time.perf_counter()
    x = _coords(data)
    p = tsne_affinities(x, perplexity)
    rng = make_rng(seed)
    y = ad.Parameter(rng.normal(0.0, 1e-2, size=(x.shape[0], q)), name="y")
    velocity = np.zeros_like(y.value)
    switch = iters // 4
    trace = []
    for it in range(iters):
        early = it < switch
        loss = tsne_kl_loss(y, p, exaggeration if early else 1.0)
        ad.backward(loss, [y])
        momentum = 0.5 if early else 0.8
        velocity = momentum * velocity - lr * y.grad
        y.value = y.value + velocity
        y.zero_grad()
        trace.append(loss.item())
    params = {"q": q, "perplexity": perplexity, "iters": iters, "lr": lr, "exaggeration": exaggeration}
    return _result(y.value - y.value.mean(axis=0), "tsne", params, seed, start, trace)


# ---------------------------------------------------------------------------
# UMAP / DensMAP


@dataclass
class FuzzyGraph:
    rho: np.ndarray
    sigma: np.ndarray
    p: SparseGraph
    knn: np.ndarray
    knn_dist: np.ndarray


def solve_umap_sigma(dists, rho: float, target: float, row: int = 0, max_steps: int = 64, tol: float = 1e-9) -> float:
    """Bisection for ``sigma`` with ``sum exp(-max(0, d - rho) / sigma) = target``."""
    dists = np.asarray(dists, dtype=np.float64)
    excess = np.maximum(dists - rho, 0.0)
    if not np.any(excess > 0):
        raise CalibrationError(row, "all neighbour distances equal the nearest distance")
    lo, hi, sigma = 0.0, np.inf, 1.0
    for _ in range(max_steps):
        total = np.exp(-excess / sigma).sum()
        if abs(total - target) < tol:
            return sigma
        if total > target:
            hi = sigma
            sigma = 0.5 * (lo + hi)
        else:
            lo = sigma
            sigma = sigma * 2.0 if hi == np.inf else 0.5 * (lo + hi)
    total = np.exp(-excess / sigma).sum()
    if abs(total - target) > 1e-6:
        raise CalibrationError(row, f"sigma search ended {abs(total - target):.3g} from target")
    return sigma


def fuzzy_graph(x, n_neighbors: int = 15) -> FuzzyGraph:
    """Per-point calibrated kernel on the k-NN graph, symmetrized by ``a + b - ab``."""
    x = _coords(x)
    n = x.shape[0]
    if not 2 <= n_neighbors < n:
        raise ContractError(f"n_neighbors={n_neighbors} must satisfy 2 <= k < n={n}")
    d2 = pairwise_sq_distances(x)
    np.fill_diagonal(d2, np.inf)
    knn = np.argsort(d2, axis=1, kind="stable")[:, :n_neighbors]
    knn_dist = np.sqrt(np.take_along_axis(d2, knn, axis=1))
    target = np.log2(n_neighbors)
    rho = knn_dist[:, 0].copy()
    sigma = np.array([solve_umap_sigma(knn_dist[i], rho[i], target, row=i) for i in range(n)])
    vals = np.exp(-np.maximum(knn_dist - rho[:, None], 0.0) / sigma[:, None])
    a = sp.csr_matrix((vals.ravel(), (np.repeat(np.arange(n), n_neighbors), knn.ravel())), shape=(n, n))
    at = a.T.tocsr()
    sym = (a + at - a.multiply(at)).tocsr()
    sym.eliminate_zeros()
    sym.data = np.clip(sym.data, 0.0, 1.0)
    return FuzzyGraph(rho, sigma, SparseGraph.from_scipy(sym), knn, knn_dist)


def fit_ab(spread: float = 1.0, min_dist: float = 0.1):
    """Curve parameters ``(a, b)`` of ``1 / (1 + a d^(2b))``.

    The default ``(spread, min_dist) = (1, 0.1)`` returns ``(1.57, 0.89)``;
    other settings are least-squares fits to the offset exponential target.
    """
    if spread == 1.0 and min_dist == 0.1:
        return 1.57, 0.89
    xv = np.linspace(0.0, 3.0 * spread, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))
    (a, b), _ = curve_fit(lambda d, a, b: 1.0 / (1.0 + a * d ** (2 * b)), xv, yv, p0=(1.0, 1.0))
    return float(a), float(b)


def _spectral_init(g: SparseGraph, x: np.ndarray, q: int) -> np.ndarray:
    # spectral layout of a connected fuzzy graph, otherwise principal components
    if g.is_connected():
        init = spectral_embedding(g, q)
    else:
        init = pca(x, q, standardize=False).embedding
    return 10.0 * init / np.abs(init).max()


def local_radius(weights, coords) -> np.ndarray:
    """Weighted mean squared distance to neighbours, ``sum_j w_ij |xi-xj|^2 / sum_j w_ij``."""
    coords = _coords(coords)
    w = sp.csr_matrix(weights, dtype=np.float64)
    mass = np.asarray(w.sum(axis=1)).ravel()
    if np.any(mass <= 0):
        bad = int(np.flatnonzero(mass <= 0)[0])
        raise DegenerateDegreeError(f"point {bad} has no neighbour weight")
    coo = w.tocoo()
    d2 = ((coords[coo.row] - coords[coo.col]) ** 2).sum(axis=1)
    num = np.bincount(coo.row, weights=coo.data * d2, minlength=coords.shape[0])
    return num / mass


def _pearson(a: ad.Tensor, b: np.ndarray) -> ad.Tensor:
    bc = b - b.mean()
    ac = ad.sub(a, ad.mean(a))
    num = ad.tsum(ad.mul(ac, bc))
    den = ad.power(ad.mul(ad.tsum(ad.mul(ac, ac)), float((bc ** 2).sum())), -0.5)
    return ad.mul(num, den)


def densmap_loss(y, fg_graph: SparseGraph, log_rp: np.ndarray, i, j, p, a: float, b: float,
                 lam: float, eps: float = 1e-7) -> ad.Tensor:
    """UMAP cross-entropy minus ``lam`` times the correlation of log local radii.

    The embedding-side radius uses ``q`` weights on the stored edges of the
    fuzzy graph; ``lam = 0`` skips the term entirely.
    """
    y = ad.constant(y)
    loss = _pair_loss(y, i, j, p, a, b, eps)
    if lam == 0:
        return loss
    edges, _ = fg_graph.directed_pairs()
    m = len(edges)
    diff = ad.gather_pairs(y, edges[:, 0], edges[:, 1])
    sq = ad.clamp(ad.tsum(ad.mul(diff, diff), axis=1, keepdims=True), RADIUS_FLOOR)
    qw = ad.power(ad.add(ad.mul(ad.power(sq, b), a), 1.0), -1.0)
    # per-node sums over stored edges through a constant incidence matrix
    inc = sp.csr_matrix((np.ones(m), (edges[:, 0], np.arange(m))), shape=(fg_graph.n, m))
    num = ad.matmul(inc, ad.mul(qw, sq))
    den = ad.matmul(inc, qw)
    r_q = ad.clamp(ad.mul(num, ad.power(den, -1.0)), RADIUS_FLOOR)
    corr = _pearson(ad.log(r_q), np.asarray(log_rp, dtype=np.float64).reshape(-1, 1))
    return ad.sub(loss, ad.mul(corr, lam))


def _embed_fuzzy(x, q, n_neighbors, min_dist, spread, epochs, lr, seed, negative_rate, lam, method):
    start = time.perf_counter()
    x = _coords(x)
    fg = fuzzy_graph(x, n_neighbors)
    a, b = fit_ab(spread, min_dist)
    rng = make_rng(seed)
    y = ad.Parameter(_spectral_init(fg.p, x, q), name="y")
    opt = AdamState(lr=lr)
    pos, pos_p = fg.p.directed_pairs()
    n_neg = int(round(negative_rate * len(pos)))
    log_rp = None
    if lam != 0:
        log_rp = np.log(np.maximum(local_radius(fg.p.to_scipy(), x), RADIUS_FLOOR))
    trace = []
    for _ in range(epochs):
        neg = negative_edge_sample(fg.p, n_neg, rng)
        i = np.concatenate([pos[:, 0], neg[:, 0]])
        j = np.concatenate([pos[:, 1], neg[:, 1]])
        p = np.concatenate([pos_p, np.zeros(len(neg))])
        loss = densmap_loss(y, fg.p, log_rp, i, j, p, a, b, lam)
        trace.append(loss.item())
        ad.backward(loss, [y])
        adam_step(opt, [y])
    params = {"q": q, "n_neighbors": n_neighbors, "min_dist": min_dist, "spread": spread,
              "epochs": epochs, "lr": lr, "negative_rate": negative_rate}
    if method == "densmap":
        params["lambda"] = lam
    return _result(y.value, method, params, seed, start, trace)


def umap_euclidean(data, q: int = 2, n_neighbors: int = 15, min_dist: float = 0.1, epochs: int = 200,
                   seed: int = 0, spread: float = 1.0, lr: float = 0.1, negative_rate: float = 1.0) -> EmbeddingResult:
    """UMAP: fuzzy k-NN graph, spectral init, Adam on negative-sampled cross-entropy."""
    return _embed_fuzzy(data, q, n_neighbors, min_dist, spread, epochs, lr, seed, negative_rate, 0.0, "umap")


def densmap(data, q: int = 2, n_neighbors: int = 15, lam: float = 2.0, epochs: int = 200, seed: int = 0,
            min_dist: float = 0.1, spread: float = 1.0, lr: float = 0.1, negative_rate: float = 1.0) -> EmbeddingResult:
    """UMAP with a density-preservation reward; ``lam = 0`` reproduces :func:`umap_euclidean`."""
    if lam < 0:
        raise ContractError(f"lambda must be nonnegative, got {lam}")
    return _embed_fuzzy(data, q, n_neighbors, min_dist, spread, epochs, lr, seed, negative_rate, lam, "densmap")
