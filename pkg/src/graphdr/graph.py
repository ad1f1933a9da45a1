"""Graph construction and graph-analytic primitives.

``SparseGraph`` stores a symmetric, self-loop-free weighted adjacency in
compressed-row form. Everything else in the package reads graphs through it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .errors import ConnectivityError, ContractError, DegenerateDegreeError
from .numerics import fix_column_signs, symmetric_eig

__all__ = [
    "SparseGraph",
    "knn_graph",
    "normalized_adjacency",
    "shortest_paths",
    "spectral_embedding",
    "negative_edge_sample",
    "graph_laplacian",
    "edge_lengths_from_coords",
]


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Undirected weighted graph in CSR form (both directions stored)."""

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        ro = np.asarray(self.row_offsets, dtype=np.int64)
        ci = np.asarray(self.col_indices, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if ro.shape != (self.n + 1,) or ro[0] != 0 or ro[-1] != ci.size or ci.size != w.size:
            raise ContractError("inconsistent CSR arrays")
        if ci.size and (ci.min() < 0 or ci.max() >= self.n):
            raise ContractError("column index out of range")
        if w.size and (w.min() < 0.0 or w.max() > 1.0):
            raise ContractError("edge weights must lie in [0, 1]")
        mat = sp.csr_matrix((w, ci, ro), shape=(self.n, self.n))
        rows = np.repeat(np.arange(self.n), np.diff(ro))
        if np.any(rows == ci):
            raise ContractError("self-loops are not allowed")
        diff = mat - mat.T
        if diff.nnz and np.abs(diff.data).max() > 0.0:
            raise ContractError("adjacency is not symmetric")
        for name, arr in (("row_offsets", ro), ("col_indices", ci), ("weights", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_csr", mat)

    @classmethod
    def from_edges(cls, n: int, edges, weights=None) -> "SparseGraph":
        """Build from undirected edges ``(i, j)``; each pair is stored in both directions.

        Repeated pairs keep the maximum weight.
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if weights is None:
            weights = np.ones(len(edges))
        weights = np.asarray(weights, dtype=np.float64)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ContractError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ContractError("self-loops are not allowed")
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        vals = np.concatenate([weights, weights])
        if len(edges):
            keys = rows * n + cols
            order = np.lexsort((-vals, keys))
            _, first = np.unique(keys[order], return_index=True)
            sel = order[first]
            rows, cols, vals = rows[sel], cols[sel], vals[sel]
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return cls.from_scipy(mat)

    @classmethod
    def from_scipy(cls, mat) -> "SparseGraph":
        mat = sp.csr_matrix(mat, dtype=np.float64)
        mat.sort_indices()
        return cls(mat.shape[0], mat.indptr.copy(), mat.indices.copy(), mat.data.copy())

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr.copy()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    @property
    def nnz(self) -> int:
        """Number of stored (directed) entries, i.e. twice the edge count."""
        return int(self.col_indices.size)

    @property
    def n_edges(self) -> int:
        return self.nnz // 2

    def degrees(self, weighted: bool = True) -> np.ndarray:
        if weighted:
            return np.asarray(self._csr.sum(axis=1)).ravel()
        return np.diff(self.row_offsets).astype(np.float64)

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def edge_list(self) -> tuple[np.ndarray, np.ndarray]:
        """Undirected edges as ``(pairs, weights)`` with ``pairs[:, 0] < pairs[:, 1]``."""
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        keep = rows < self.col_indices
        pairs = np.stack([rows[keep], self.col_indices[keep]], axis=1)
        return pairs, self.weights[keep].copy()

    def directed_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All stored entries ``(i, j)`` with their weights (both directions)."""
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        return np.stack([rows, self.col_indices], axis=1), self.weights.copy()

    def weight(self, i: int, j: int) -> float:
        return float(self._csr[i, j])

    def n_components(self) -> int:
        return int(csgraph.connected_components(self._csr, directed=False)[0])

    def component_labels(self) -> np.ndarray:
        return csgraph.connected_components(self._csr, directed=False)[1]

    def is_connected(self) -> bool:
        return self.n <= 1 or self.n_components() == 1

    def __eq__(self, other):
        if not isinstance(other, SparseGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


def _knn_indices(points: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    n = points.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        block = points[start:start + chunk]
        # direct differences keep exact ties exact (the expanded form does not)
        d2 = ((block[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
        d2[np.arange(block.shape[0]), np.arange(start, start + block.shape[0])] = np.inf
        out[start:start + chunk] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def knn_graph(points, k: int) -> SparseGraph:
    """Union-symmetrized k-nearest-neighbour graph with unit weights.

    Ties are broken toward the lower node index.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if not 1 <= k < n:
        raise ContractError(f"k={k} must satisfy 1 <= k < n={n}")
    if not np.all(np.isfinite(points)):
        raise ContractError("points must be finite")
    idx = _knn_indices(points, k)
    rows = np.repeat(np.arange(n), k)
    mat = sp.csr_matrix((np.ones(n * k), (rows, idx.ravel())), shape=(n, n))
    mat = mat.maximum(mat.T).tocsr()
    mat.data[:] = 1.0
    return SparseGraph.from_scipy(mat)


def normalized_adjacency(g: SparseGraph, add_self_loops: bool = True, sparse: bool = False):
    """``D^{-1/2} (A [+ I]) D^{-1/2}`` with ``D`` the (augmented) degree matrix."""
    a = g.to_scipy()
    if add_self_loops:
        a = a + sp.identity(g.n, format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    if np.any(deg <= 0):
        raise DegenerateDegreeError("isolated node without self-loop")
    inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    out = (inv_sqrt @ a @ inv_sqrt).tocsr()
    return out if sparse else out.toarray()


def graph_laplacian(g: SparseGraph, kind: str = "unnormalized") -> np.ndarray:
    a = g.to_dense()
    deg = a.sum(axis=1)
    if kind == "unnormalized":
        return np.diag(deg) - a
    if kind == "symmetric":
        if np.any(deg <= 0):
            raise DegenerateDegreeError("isolated node in symmetric Laplacian")
        s = 1.0 / np.sqrt(deg)
        return np.eye(g.n) - s[:, None] * a * s[None, :]
    raise ContractError(f"unknown Laplacian kind {kind!r}")


def edge_lengths_from_coords(g: SparseGraph, coords) -> np.ndarray:
    """Euclidean lengths aligned with ``g.col_indices``."""
    coords = np.asarray(coords, dtype=np.float64)
    rows = np.repeat(np.arange(g.n), np.diff(g.row_offsets))
    return np.sqrt(((coords[rows] - coords[g.col_indices]) ** 2).sum(axis=1))


def shortest_paths(g: SparseGraph, sources=None, edge_length: str = "unit", lengths=None) -> np.ndarray:
    """Dijkstra distances from ``sources`` (all nodes when ``None``).

    ``edge_length`` is ``"unit"`` (hop counts) or ``"euclidean"``, in which case
    ``lengths`` must be aligned with ``g.col_indices`` (see
    :func:`edge_lengths_from_coords`). Unreachable pairs are ``inf``.
    """
    if edge_length == "unit":
        data = np.ones(g.nnz)
    elif edge_length == "euclidean":
        if lengths is None:
            raise ContractError("euclidean edge lengths require `lengths`")
        data = np.asarray(lengths, dtype=np.float64)
        if data.shape != (g.nnz,) or np.any(data < 0):
            raise ContractError("lengths must be nonnegative and aligned with the CSR storage")
    else:
        raise ContractError(f"unknown edge_length mode {edge_length!r}")
    mat = sp.csr_matrix((data, g.col_indices, g.row_offsets), shape=(g.n, g.n))
    if sources is None:
        sources = np.arange(g.n)
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    return csgraph.dijkstra(mat, directed=False, indices=sources)


def spectral_embedding(g: SparseGraph, d: int) -> np.ndarray:
    """Laplacian-eigenmap coordinates of a connected graph.

    Solves ``L f = λ D f`` through the symmetric normalized Laplacian and keeps
    the ``d`` eigenvectors after the trivial one, rescaled by ``D^{-1/2}`` so
    that the columns are ``D``-orthonormal. Each column's largest-magnitude
    entry is positive.
    """
    if not 1 <= d < g.n:
        raise ContractError(f"d={d} must satisfy 1 <= d < n={g.n}")
    if not g.is_connected():
        raise ConnectivityError(f"graph has {g.n_components()} connected components")
    deg = g.degrees()
    eig = symmetric_eig(graph_laplacian(g, "symmetric"))
    vecs = eig.vectors[:, 1:d + 1] / np.sqrt(deg)[:, None]
    return fix_column_signs(vecs)


def negative_edge_sample(g: SparseGraph, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of ``count`` distinct unordered non-adjacent pairs ``(i < j)``.

    Rejection sampling; pairs are returned in acceptance order.
    """
    n = g.n
    available = n * (n - 1) // 2 - g.n_edges
    if count < 0 or count > available:
        raise ContractError(f"requested {count} negatives but only {available} non-edges exist")
    out = np.empty((count, 2), dtype=np.int64)
    if count == 0:
        return out
    taken = np.zeros(n * n, dtype=bool)
    rows = np.repeat(np.arange(n), np.diff(g.row_offsets))
    taken[rows * n + g.col_indices] = True  # existing edges are never accepted
    filled = 0
    while filled < count:
        need = count - filled
        batch = max(2 * need, 64)
        i = rng.integers(0, n, size=batch)
        j = rng.integers(0, n, size=batch)
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        key = lo * n + hi
        ok = (lo != hi) & ~taken[key]
        key, lo, hi = key[ok], lo[ok], hi[ok]
        _, first = np.unique(key, return_index=True)
        first.sort()
        first = first[:need]
        taken[key[first]] = True
        m = first.size
        out[filled:filled + m, 0] = lo[first]
        out[filled:filled + m, 1] = hi[first]
        filled += m
    return out
