"""Synthetic point clouds, the graph + spectral-feature pipeline, and file I/O.

The generators follow the familiar scikit-learn recipes but are written out
here so that the output stream depends only on :func:`graphdr.numerics.make_rng`.
Circles and moons use evenly spaced angles, which leaves the Gaussian noise as
the only stochastic element.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConnectivityError, ContractError, ParseError
from .graph import SparseGraph, knn_graph, spectral_embedding
from .numerics import make_rng, pairwise_sq_distances

__all__ = [
    "PointCloud",
    "GraphDataset",
    "make_blobs",
    "make_circles",
    "make_moons",
    "make_swissroll",
    "make_point_cloud",
    "build_graph_dataset",
    "synthetic_graph_dataset",
    "load_graph_dataset",
    "save_graph_dataset",
    "load_dataset_dir",
    "save_dataset_dir",
    "GENERATORS",
    "sbm_graph_dataset",
    "load_toy_graph",
]


@dataclass
class PointCloud:
    coords: np.ndarray
    labels: Optional[np.ndarray] = None
    intrinsic: Optional[np.ndarray] = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.coords.shape[0],):
                raise ContractError("labels must have one entry per point")
            if self.labels.size and self.labels.min() < 0:
                raise ContractError("labels must be nonnegative")

    @property
    def n(self) -> int:
        return self.coords.shape[0]


@dataclass
class GraphDataset:
    graph: SparseGraph
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    ground_truth_coords: Optional[np.ndarray] = None
    name: str = "dataset"
    intrinsic: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != self.graph.n:
            raise ContractError(
                f"features must have {self.graph.n} rows, got shape {self.features.shape}"
            )
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.graph.n,):
                raise ContractError("labels must have one entry per node")

    @property
    def n(self) -> int:
        return self.graph.n

    def with_features(self, features) -> "GraphDataset":
        return replace(self, features=np.asarray(features, dtype=np.float64))


def _balanced_sizes(n: int, k: int) -> list[int]:
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


def make_blobs(n: int, centers: int = 4, std: float = 1.0, rng=None) -> PointCloud:
    """Isotropic Gaussian clusters around centers drawn uniformly in [-10, 10]^2."""
    if centers < 1 or std <= 0:
        raise ContractError("need centers >= 1 and std > 0")
    if n < centers:
        raise ContractError(f"n={n} smaller than the number of centers {centers}")
    rng = make_rng(0) if rng is None else rng
    centre_xy = rng.uniform(-10.0, 10.0, size=(centers, 2))
    labels = np.repeat(np.arange(centers), _balanced_sizes(n, centers))
    coords = centre_xy[labels] + rng.normal(0.0, std, size=(n, 2))
    return PointCloud(coords, labels)


def _check_even(n: int) -> None:
    if n <= 0 or n % 2:
        raise ContractError(f"n must be a positive even number, got {n}")


def make_circles(n: int, factor: float = 0.8, noise: float = 0.0, rng=None) -> PointCloud:
    _check_even(n)
    if not 0 < factor < 1 or noise < 0:
        raise ContractError("need 0 < factor < 1 and noise >= 0")
    rng = make_rng(0) if rng is None else rng
    half = n // 2
    theta = np.linspace(0.0, 2.0 * np.pi, half, endpoint=False)
    ring = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    coords = np.concatenate([ring, factor * ring])
    labels = np.repeat([0, 1], half)
    if noise > 0:
        coords = coords + rng.normal(0.0, noise, size=coords.shape)
    return PointCloud(coords, labels)


def make_moons(n: int, noise: float = 0.0, rng=None) -> PointCloud:
    _check_even(n)
    if noise < 0:
        raise ContractError("noise must be >= 0")
    rng = make_rng(0) if rng is None else rng
    half = n // 2
    theta = np.linspace(0.0, np.pi, half)
    upper = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    lower = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
    coords = np.concatenate([upper, lower])
    labels = np.repeat([0, 1], half)
    if noise > 0:
        coords = coords + rng.normal(0.0, noise, size=coords.shape)
    return PointCloud(coords, labels)


def make_swissroll(n: int, noise: float = 0.0, rng=None, n_bins: int = 10) -> PointCloud:
    """Swiss roll with ``t ~ U[1.5π, 4.5π]`` and height ``U[0, 21]``.

    Labels are ``n_bins`` equal-count bins of ``t`` so that classification
    metrics are defined.
    """
    if noise < 0:
        raise ContractError("noise must be >= 0")
    rng = make_rng(0) if rng is None else rng
    t = 1.5 * np.pi * (1.0 + 2.0 * rng.uniform(size=n))
    h = 21.0 * rng.uniform(size=n)
    coords = np.stack([t * np.cos(t), h, t * np.sin(t)], axis=1)
    if noise > 0:
        coords = coords + rng.normal(0.0, noise, size=coords.shape)
    rank = np.empty(n, dtype=np.int64)
    rank[np.argsort(t, kind="stable")] = np.arange(n)
    labels = rank * n_bins // n
    return PointCloud(coords, labels, intrinsic=t)


GENERATORS = {
    "blobs": make_blobs,
    "circles": make_circles,
    "moons": make_moons,
    "swissroll": make_swissroll,
}

DEFAULT_PARAMS = {
    "blobs": {"centers": 4, "std": 1.0},
    "circles": {"factor": 0.5, "noise": 0.05},
    "moons": {"noise": 0.1},
    "swissroll": {"noise": 0.0},
}


def make_point_cloud(name: str, n: int, seed: int, **params) -> PointCloud:
    if name not in GENERATORS:
        raise ContractError(f"unknown dataset {name!r}; choose from {sorted(GENERATORS)}")
    kwargs = dict(DEFAULT_PARAMS[name])
    kwargs.update(params)
    return GENERATORS[name](n, rng=make_rng(seed), **kwargs)


def _bridge_components(g: SparseGraph, coords: np.ndarray) -> SparseGraph:
    # Join components along a minimum spanning tree whose inter-component
    # edge is the closest pair of points between the two components.
    labels = g.component_labels()
    k = labels.max() + 1
    d2 = pairwise_sq_distances(coords)
    best = {}
    for a in range(k):
        ia = np.flatnonzero(labels == a)
        for b in range(a + 1, k):
            ib = np.flatnonzero(labels == b)
            block = d2[np.ix_(ia, ib)]
            flat = int(np.argmin(block))
            r, c = divmod(flat, block.shape[1])
            best[(a, b)] = (block[r, c], int(ia[r]), int(ib[c]))
    parent = list(range(k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    new_edges = []
    for (a, b), (_, i, j) in sorted(best.items(), key=lambda kv: (kv[1][0], kv[0])):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            new_edges.append((min(i, j), max(i, j)))
    pairs, w = g.edge_list()
    pairs = np.concatenate([pairs, np.asarray(new_edges, dtype=np.int64).reshape(-1, 2)])
    w = np.concatenate([w, np.ones(len(new_edges))])
    return SparseGraph.from_edges(g.n, pairs, w)


def build_graph_dataset(
    pc: PointCloud,
    k_graph: int = 20,
    feat_components: int = 10,
    name: str = "dataset",
    bridge_components: bool = False,
) -> GraphDataset:
    """k-NN graph on the point cloud plus Laplacian-eigenmap node features.

    A disconnected k-NN graph raises :class:`ConnectivityError` unless
    ``bridge_components`` is set, in which case the components are joined by
    their closest inter-component point pairs (one edge per spanning-tree link).
    """
    g = knn_graph(pc.coords, k_graph)
    n_comp = g.n_components()
    meta = {"k_graph": k_graph, "feat_components": feat_components, "bridged_edges": 0}
    if n_comp > 1:
        if not bridge_components:
            raise ConnectivityError(
                f"{k_graph}-NN graph has {n_comp} components; increase k or regenerate"
            )
        g = _bridge_components(g, pc.coords)
        meta["bridged_edges"] = n_comp - 1
    features = spectral_embedding(g, feat_components)
    return GraphDataset(
        graph=g,
        features=features,
        labels=None if pc.labels is None else pc.labels.copy(),
        ground_truth_coords=pc.coords.copy(),
        name=name,
        intrinsic=None if pc.intrinsic is None else pc.intrinsic.copy(),
        meta=meta,
    )


def synthetic_graph_dataset(
    name: str,
    n: int = 500,
    seed: int = 0,
    k_graph: int = 20,
    feat_components: int = 10,
    bridge_components: bool = True,
    **params,
) -> GraphDataset:
    """Generate one of the four synthetic benchmarks end to end."""
    pc = make_point_cloud(name, n, seed, **params)
    ds = build_graph_dataset(pc, k_graph, feat_components, name=name,
                             bridge_components=bridge_components)
    ds.meta.update({"generator": name, "n": n, "seed": seed, "params": params})
    return ds


# ---------------------------------------------------------------------------
# file formats


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_graph_dataset(ds: GraphDataset, edge_path, feature_path, label_path=None, coords_path=None) -> None:
    pairs, w = ds.graph.edge_list()
    with open(edge_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# n={ds.n}\n")
        for (i, j), wij in zip(pairs, w):
            fh.write(f"{i}\t{j}\t{_fmt(wij)}\n")
    _write_matrix_csv(feature_path, ds.features)
    if label_path is not None and ds.labels is not None:
        with open(label_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{int(v)}\n" for v in ds.labels)
    if coords_path is not None and ds.ground_truth_coords is not None:
        _write_matrix_csv(coords_path, ds.ground_truth_coords)


def _write_matrix_csv(path, mat) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.atleast_2d(mat):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise ParseError(f"non-numeric value ({exc})", path, lineno) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(f"expected {width} columns, found {len(vals)}", path, lineno)
            rows.append(vals)
    if not rows:
        raise ParseError("no rows", path)
    return np.asarray(rows, dtype=np.float64)


def _read_edges(path, n: int):
    seen = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ParseError("expected `src<TAB>dst[<TAB>weight]`", path, lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise ParseError("malformed edge", path, lineno) from None
            if not (0 <= i < n and 0 <= j < n):
                raise ParseError(f"node id out of range for {n} nodes", path, lineno)
            if i == j:
                raise ParseError("self-loop", path, lineno)
            if not 0.0 <= w <= 1.0:
                raise ParseError(f"weight {w} outside [0, 1]", path, lineno)
            key = (min(i, j), max(i, j))
            if key in seen and seen[key] != w:
                raise ParseError(f"conflicting weights for edge {key}", path, lineno)
            seen[key] = w
    pairs = np.asarray(list(seen.keys()), dtype=np.int64).reshape(-1, 2)
    weights = np.asarray(list(seen.values()), dtype=np.float64)
    return pairs, weights


def load_graph_dataset(edge_path, feature_path, label_path=None, coords_path=None, name=None) -> GraphDataset:
    features = read_matrix_csv(feature_path)
    n = features.shape[0]
    pairs, weights = _read_edges(edge_path, n)
    graph = SparseGraph.from_edges(n, pairs, weights)
    labels = None
    if label_path is not None:
        vals = []
        with open(label_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    vals.append(int(line))
                except ValueError:
                    raise ParseError("label is not an integer", label_path, lineno) from None
        if len(vals) != n:
            raise ParseError(f"expected {n} labels, found {len(vals)}", label_path)
        labels = np.asarray(vals, dtype=np.int64)
    coords = read_matrix_csv(coords_path) if coords_path is not None else None
    if coords is not None and coords.shape[0] != n:
        raise ParseError(f"expected {n} coordinate rows, found {coords.shape[0]}", coords_path)
    return GraphDataset(graph, features, labels, coords, name=name or Path(feature_path).parent.name)


EDGE_FILE = "edges.tsv"
FEATURE_FILE = "features.csv"
LABEL_FILE = "labels.txt"
COORD_FILE = "coords.csv"
INTRINSIC_FILE = "intrinsic.csv"
META_FILE = "meta.json"


def save_dataset_dir(ds: GraphDataset, directory) -> Path:
    """Write a dataset directory (edges, features, labels, coords, meta)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_graph_dataset(
        ds, d / EDGE_FILE, d / FEATURE_FILE,
        d / LABEL_FILE if ds.labels is not None else None,
        d / COORD_FILE if ds.ground_truth_coords is not None else None,
    )
    if ds.intrinsic is not None:
        _write_matrix_csv(d / INTRINSIC_FILE, ds.intrinsic[:, None])
    with open(d / META_FILE, "w", encoding="utf-8") as fh:
        json.dump({"name": ds.name, "meta": ds.meta}, fh, indent=2, sort_keys=True, default=str)
    return d


def load_dataset_dir(directory) -> GraphDataset:
    d = Path(directory)
    label = d / LABEL_FILE
    coords = d / COORD_FILE
    ds = load_graph_dataset(
        d / EDGE_FILE, d / FEATURE_FILE,
        label if label.exists() else None,
        coords if coords.exists() else None,
    )
    if (d / INTRINSIC_FILE).exists():
        ds.intrinsic = read_matrix_csv(d / INTRINSIC_FILE)[:, 0]
    if (d / META_FILE).exists():
        meta = json.loads((d / META_FILE).read_text(encoding="utf-8"))
        ds.name = meta.get("name", ds.name)
        ds.meta = meta.get("meta", {})
    else:
        ds.name = d.name
    return ds


def sbm_graph_dataset(sizes=(50, 50, 50, 50), p_in: float = 0.15, p_out: float = 0.005, feat_dim: int = 8,
                      feat_noise: float = 1.0, seed: int = 0, name: str = "sbm") -> GraphDataset:
    """Stochastic block model with block-dependent Gaussian features.

    Each block gets a random unit mean vector; node features are that mean
    plus isotropic noise. Disconnected draws are bridged like the synthetic sets.
    """
    rng = make_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = labels.size
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    g = SparseGraph.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1))
    means = rng.normal(size=(len(sizes), feat_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    features = 2.0 * means[labels] + feat_noise * rng.normal(size=(n, feat_dim)) / np.sqrt(feat_dim)
    bridged = 0
    if not g.is_connected():
        bridged = g.n_components() - 1
        g = _bridge_components(g, features)
    meta = {"generator": "sbm", "sizes": list(sizes), "p_in": p_in, "p_out": p_out, "seed": seed,
            "bridged_edges": bridged}
    return GraphDataset(g, features, labels, None, name=name, meta=meta)


def load_toy_graph() -> GraphDataset:
    """The bundled 200-node, 4-block homophilic graph fixture."""
    from importlib.resources import files

    ds = load_dataset_dir(Path(str(files("graphdr") / "data" / "toy_sbm")))
    ds.name = "toy_sbm"
    return ds
