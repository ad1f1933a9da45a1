"""Embedding-quality metrics.

Supervised: kernel-classifier accuracy and adjusted R^2. Structural: geodesic
Spearman correlation, k-NN overlap and log-radius density correlation.
Clustering: Davies-Bouldin, Calinski-Harabasz, silhouette. Distributional:
Frechet distance between Gaussian fits.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata
from sklearn.model_selection import KFold, StratifiedKFold
from sklearn.svm import SVC

from .classical import local_radius
from .errors import ConnectivityError, ContractError, SingularityError, StratificationError
from .graph import SparseGraph, shortest_paths
from .numerics import make_rng, pairwise_sq_distances, solve_linear, spd_sqrt_small, symmetric_eig

__all__ = [
    "METRIC_NAMES",
    "MetricsReport",
    "KernelClassifier",
    "classification_accuracy",
    "adjusted_r2",
    "spearman",
    "geodesic_spearman",
    "knn_overlap",
    "density_correlation",
    "davies_bouldin",
    "calinski_harabasz",
    "silhouette",
    "frechet_distance",
    "evaluate_embedding",
]

METRIC_NAMES = (
    "accuracy",
    "adjusted_r2",
    "spearman",
    "overlap",
    "density_corr",
    "davies_bouldin",
    "calinski_harabasz",
    "silhouette",
    "frechet",
)
CH_SENTINEL = 1e12
RADIUS_FLOOR = 1e-12


@dataclass
class MetricsReport:
    dataset: str
    method: str
    seed: int
    entries: dict = field(default_factory=dict)
    wall_seconds: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def add(self, name: str, value: float, seconds: float = 0.0) -> None:
        if name not in METRIC_NAMES:
            raise ContractError(f"unknown metric {name!r}")
        value = float(value)
        if not np.isfinite(value):
            raise ContractError(f"metric {name} is not finite ({value})")
        self.entries[name] = value
        self.wall_seconds[name] = float(seconds)


def _emb(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ContractError(f"embedding must be 2-D, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# supervised


class KernelClassifier:
    """One-vs-rest RBF support vector classifier.

    Each binary problem is solved by libsvm's SMO solver (through
    scikit-learn); only the resulting dual coefficients, support vectors and
    intercepts are kept, and decisions are recomputed from them.
    """

    def __init__(self, c: float = 1.0, gamma: float | None = None, tol: float = 1e-3):
        self.c = c
        self.gamma = gamma
        self.tol = tol
        self.classes_ = None
        self.support_ = []  # per binary problem: (support vectors, dual coefs, intercept)

    def fit(self, x, y) -> "KernelClassifier":
        x = _emb(x)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ContractError("need at least two classes")
        if self.gamma is None:
            var = x.var()
            self.gamma = 1.0 / (x.shape[1] * var) if var > 0 else 1.0
        targets = [self.classes_[1]] if len(self.classes_) == 2 else list(self.classes_)
        self.support_ = []
        for cls in targets:
            svc = SVC(C=self.c, kernel="rbf", gamma=self.gamma, tol=self.tol, max_iter=10_000 * len(x))
            yb = (y == cls).astype(int)
            svc.fit(x, yb)
            # libsvm orders the binary labels as (0, 1); its decision is positive for label 1
            self.support_.append((svc.support_vectors_.copy(), svc.dual_coef_.ravel().copy(), float(svc.intercept_[0])))
        return self

    def decision_function(self, x) -> np.ndarray:
        x = _emb(x)
        cols = []
        for sv, coef, b in self.support_:
            k = np.exp(-self.gamma * pairwise_sq_distances(x, sv))
            cols.append(k @ coef + b)
        return np.column_stack(cols)

    def predict(self, x) -> np.ndarray:
        dec = self.decision_function(x)
        if len(self.classes_) == 2:
            return np.where(dec[:, 0] > 0, self.classes_[1], self.classes_[0])
        return self.classes_[np.argmax(dec, axis=1)]


def classification_accuracy(emb, labels, folds: int = 10, seed: int = 0) -> float:
    """Mean held-out accuracy of a one-vs-rest RBF classifier under stratified k-fold."""
    x = _emb(emb)
    y = np.asarray(labels)
    if folds < 2:
        raise ContractError(f"folds must be >= 2, got {folds}")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ContractError("need at least two classes")
    if counts.min() < folds:
        raise StratificationError(f"class {classes[np.argmin(counts)]} has {counts.min()} members, fewer than {folds} folds")
    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    scores = []
    for train, test in skf.split(x, y):
        clf = KernelClassifier().fit(x[train], y[train])
        scores.append(float(np.mean(clf.predict(x[test]) == y[test])))
    return float(np.mean(scores))


def _ols_adjusted(xtr, ytr, xte, yte) -> float:
    d = xtr.shape[1]
    n = len(yte)
    if n - d - 1 <= 0:
        raise ContractError(f"need more than d+1={d + 1} evaluation points, got {n}")
    mu = xtr.mean(axis=0)
    xc = xtr - mu
    gram = xc.T @ xc
    if np.linalg.matrix_rank(gram) < d:
        raise SingularityError("design matrix is rank deficient after centering")
    coef = solve_linear(gram, xc.T @ (ytr - ytr.mean()))
    pred = ytr.mean() + (xte - mu) @ coef
    ss_tot = float(((yte - yte.mean()) ** 2).sum())
    ss_res = float(((yte - pred) ** 2).sum())
    r2 = 0.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return 1.0 - (1.0 - r2) * (n - 1) / (n - d - 1)


def adjusted_r2(emb, target, folds: int = 10, seed: int = 0) -> float:
    """Adjusted R^2 of least squares from embedding to ``target``, averaged over k folds.

    ``folds=1`` fits and scores in-sample. A constant target has R^2 = 0 by
    convention, so its adjusted value is negative.
    """
    x = _emb(emb)
    y = np.asarray(target, dtype=np.float64).ravel()
    if len(y) != len(x):
        raise ContractError("target length differs from embedding rows")
    if folds == 1:
        return _ols_adjusted(x, y, x, y)
    scores = [
        _ols_adjusted(x[tr], y[tr], x[te], y[te])
        for tr, te in KFold(n_splits=folds, shuffle=True, random_state=seed).split(x)
    ]
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# structure preservation


def spearman(a, b) -> float:
    """Rank correlation with average ranks for ties."""
    ra = rankdata(np.asarray(a, dtype=np.float64))
    rb = rankdata(np.asarray(b, dtype=np.float64))
    ra -= ra.mean()
    rb -= rb.mean()
    den = np.sqrt((ra ** 2).sum() * (rb ** 2).sum())
    return float((ra * rb).sum() / den) if den > 0 else 0.0


def geodesic_spearman(emb, g: SparseGraph, sample: int = 1000, seed: int = 0) -> float:
    """Spearman correlation of hop distances and embedding distances over node pairs.

    All pairs are used when ``n <= sample``; otherwise pairs among ``sample``
    uniformly drawn nodes.
    """
    x = _emb(emb)
    if not g.is_connected():
        raise ConnectivityError(f"graph has {g.n_components()} connected components")
    n = g.n
    if n <= sample:
        nodes = np.arange(n)
    else:
        nodes = np.sort(make_rng(seed).choice(n, size=sample, replace=False))
    hops = shortest_paths(g, sources=nodes)[:, nodes]
    sub = x[nodes]
    dist = np.sqrt(pairwise_sq_distances(sub))
    iu = np.triu_indices(len(nodes), 1)
    return spearman(hops[iu], dist[iu])


def knn_overlap(emb, g: SparseGraph, k: int = 50) -> float:
    """Mean fraction of each node's graph neighbours found among its k nearest embedding neighbours."""
    x = _emb(emb)
    n = g.n
    if not 1 <= k < n:
        raise ContractError(f"k={k} must satisfy 1 <= k < n={n}")
    d2 = pairwise_sq_distances(x)
    np.fill_diagonal(d2, np.inf)
    nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
    member = np.zeros((n, n), dtype=bool)
    member[np.repeat(np.arange(n), k), nn.ravel()] = True
    total = 0.0
    for i in range(n):
        nb = g.neighbors(i)
        if len(nb):
            total += member[i, nb].sum() / len(nb)
    return total / n


def density_correlation(g: SparseGraph, original_coords, emb, alpha: float = 1.57, beta: float = 0.89,
                        embedding_weights=None, return_clamped: bool = False):
    """Pearson correlation of log local radii in the original and embedding spaces.

    Original radii use the graph weights; embedding radii use
    ``1 / (1 + alpha d^(2 beta))`` on the same edges, unless
    ``embedding_weights`` (aligned with the CSR storage) freezes them.
    Radii below 1e-12 are clamped with a RuntimeWarning.
    """
    x = _emb(original_coords)
    y = _emb(emb)
    w_o = g.to_scipy()
    if embedding_weights is None:
        rows = np.repeat(np.arange(g.n), np.diff(g.row_offsets))
        d = np.sqrt(((y[rows] - y[g.col_indices]) ** 2).sum(axis=1))
        embedding_weights = 1.0 / (1.0 + alpha * d ** (2.0 * beta))
    w_e = w_o.copy()
    w_e.data = np.asarray(embedding_weights, dtype=np.float64).copy()
    r_o = local_radius(w_o, x)
    r_e = local_radius(w_e, y)
    clamped = int((r_o < RADIUS_FLOOR).sum() + (r_e < RADIUS_FLOOR).sum())
    if clamped:
        warnings.warn(f"{clamped} local radii clamped at {RADIUS_FLOOR}", RuntimeWarning, stacklevel=2)
    lo = np.log(np.maximum(r_o, RADIUS_FLOOR))
    le = np.log(np.maximum(r_e, RADIUS_FLOOR))
    lo -= lo.mean()
    le -= le.mean()
    den = np.sqrt((lo ** 2).sum() * (le ** 2).sum())
    value = float((lo * le).sum() / den) if den > 0 else 0.0
    return (value, clamped) if return_clamped else value


# ---------------------------------------------------------------------------
# clustering indices


def _clusters(x, labels):
    labels = np.asarray(labels)
    if len(labels) != len(x):
        raise ContractError("labels length differs from embedding rows")
    classes, inverse = np.unique(labels, return_inverse=True)
    if len(classes) < 2:
        raise ContractError("need at least two clusters")
    centroids = np.array([x[inverse == k].mean(axis=0) for k in range(len(classes))])
    return classes, inverse, centroids


def davies_bouldin(emb, labels) -> float:
    """Mean over clusters of the worst ``(s_k + s_j) / |c_k - c_j|`` ratio.

    Coincident centroids give an infinite ratio for that pair.
    """
    x = _emb(emb)
    classes, inv, cent = _clusters(x, labels)
    kk = len(classes)
    scatter = np.array([np.linalg.norm(x[inv == k] - cent[k], axis=1).mean() for k in range(kk)])
    sep = np.sqrt(pairwise_sq_distances(cent))
    worst = np.empty(kk)
    for k in range(kk):
        ratios = []
        for j in range(kk):
            if j == k:
                continue
            num = scatter[k] + scatter[j]
            if sep[k, j] > 0:
                ratios.append(num / sep[k, j])
            else:
                ratios.append(np.inf if num > 0 else 0.0)
        worst[k] = max(ratios)
    return float(worst.mean())


def calinski_harabasz(emb, labels, return_flag: bool = False):
    """``(B / (K-1)) / (W / (n-K))``; zero within-cluster scatter returns a sentinel (1e12) and a flag."""
    x = _emb(emb)
    classes, inv, cent = _clusters(x, labels)
    n, kk = len(x), len(classes)
    if not kk < n:
        raise ContractError(f"need fewer clusters ({kk}) than points ({n})")
    mean = x.mean(axis=0)
    sizes = np.bincount(inv)
    between = float((sizes * ((cent - mean) ** 2).sum(axis=1)).sum())
    within = float(((x - cent[inv]) ** 2).sum())
    flag = within == 0
    value = CH_SENTINEL if flag else (between / (kk - 1)) / (within / (n - kk))
    return (value, flag) if return_flag else value


def silhouette(emb, labels) -> float:
    """Mean silhouette coefficient; points in singleton clusters score 0."""
    x = _emb(emb)
    classes, inv, _ = _clusters(x, labels)
    kk = len(classes)
    dist = np.sqrt(pairwise_sq_distances(x))
    sizes = np.bincount(inv, minlength=kk)
    sums = np.column_stack([dist[:, inv == k].sum(axis=1) for k in range(kk)])
    n = len(x)
    s = np.zeros(n)
    for i in range(n):
        own = inv[i]
        if sizes[own] == 1:
            continue
        a = sums[i, own] / (sizes[own] - 1)
        others = [sums[i, k] / sizes[k] for k in range(kk) if k != own]
        b = min(others)
        m = max(a, b)
        s[i] = (b - a) / m if m > 0 else 0.0
    return float(s.mean())


# ---------------------------------------------------------------------------
# distributional


def frechet_distance(emb, reference, return_flag: bool = False):
    """``|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)`` between Gaussian fits.

    Tiny negative eigenvalues from rounding are clamped; the flag is set when
    one is below -1e-6.
    """
    a = _emb(emb)
    b = _emb(reference)
    if len(a) < 2 or len(b) < 2:
        raise ContractError("each set needs at least two points")
    if a.shape[1] != b.shape[1]:
        raise ContractError("point sets have different dimensions")
    mu1, mu2 = a.mean(axis=0), b.mean(axis=0)
    s1 = np.atleast_2d(np.cov(a, rowvar=False))
    s2 = np.atleast_2d(np.cov(b, rowvar=False))
    s1 = 0.5 * (s1 + s1.T)
    s2 = 0.5 * (s2 + s2.T)
    flag = bool(symmetric_eig(s1).values.min() < -1e-6)
    r1 = spd_sqrt_small(s1)
    m = r1 @ s2 @ r1
    m = 0.5 * (m + m.T)
    flag = flag or bool(symmetric_eig(m).values.min() < -1e-6)
    value = float(((mu1 - mu2) ** 2).sum() + np.trace(s1) + np.trace(s2) - 2.0 * np.trace(spd_sqrt_small(m)))
    value = max(value, 0.0)
    return (value, flag) if return_flag else value


# ---------------------------------------------------------------------------


def evaluate_embedding(emb, ds, method: str = "", seed: int = 0, metrics=None, folds: int = 10,
                       k_overlap: int = 50, alpha: float = 1.57, beta: float = 0.89) -> MetricsReport:
    """Compute the named metrics (all applicable ones by default) for an embedding of ``ds``."""
    report = MetricsReport(dataset=getattr(ds, "name", ""), method=method, seed=seed)
    wanted = METRIC_NAMES if metrics is None else tuple(metrics)
    labels = getattr(ds, "labels", None)
    coords = getattr(ds, "ground_truth_coords", None)
    intrinsic = getattr(ds, "intrinsic", None)

    def run(name, fn):
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            value = fn()
        if isinstance(value, tuple):
            value, flag = value
            if flag:
                report.flags[name] = flag
        if caught:
            report.flags[name + "_warnings"] = len(caught)
        if not np.isfinite(value):
            report.flags[name] = "non-finite"
            return
        report.add(name, value, time.perf_counter() - t0)

    for name in wanted:
        if name not in METRIC_NAMES:
            raise ContractError(f"unknown metric {name!r}")
        if name == "accuracy" and labels is not None:
            run(name, lambda: classification_accuracy(emb, labels, folds, seed))
        elif name == "adjusted_r2" and intrinsic is not None:
            run(name, lambda: adjusted_r2(emb, intrinsic, folds, seed))
        elif name == "spearman":
            run(name, lambda: geodesic_spearman(emb, ds.graph, seed=seed))
        elif name == "overlap":
            run(name, lambda: knn_overlap(emb, ds.graph, k_overlap))
        elif name == "density_corr" and coords is not None:
            run(name, lambda: density_correlation(ds.graph, coords, emb, alpha, beta, return_clamped=True))
        elif name == "davies_bouldin" and labels is not None:
            run(name, lambda: davies_bouldin(emb, labels))
        elif name == "calinski_harabasz" and labels is not None:
            run(name, lambda: calinski_harabasz(emb, labels, return_flag=True))
        elif name == "silhouette" and labels is not None:
            run(name, lambda: silhouette(emb, labels))
        elif name == "frechet" and coords is not None and coords.shape[1] == _emb(emb).shape[1]:
            run(name, lambda: frechet_distance(emb, coords, return_flag=True))
    return report
