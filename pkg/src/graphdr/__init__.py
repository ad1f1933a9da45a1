"""graphdr: graph dimensionality reduction with GNUMAP, GNN baselines and classical manifold learners.

The main entry points are :func:`graphdr.gnumap.gnumap_train`, the trainers in
:mod:`graphdr.gnn_baselines` and :mod:`graphdr.classical`, the metrics in
:mod:`graphdr.metrics` and the benchmark harness in :mod:`graphdr.harness`.
"""
from __future__ import annotations

from .datasets import GraphDataset, load_dataset_dir, load_toy_graph, synthetic_graph_dataset
from .errors import GraphDRError
from .gnumap import GnumapConfig, gnumap_train
from .graph import SparseGraph
from .harness import ExperimentConfig, load_config, run_benchmark, run_method
from .metrics import MetricsReport, evaluate_embedding
from .results import EmbeddingResult

__version__ = "0.1.0"

__all__ = [
    "GraphDataset",
    "SparseGraph",
    "EmbeddingResult",
    "MetricsReport",
    "GnumapConfig",
    "GraphDRError",
    "gnumap_train",
    "evaluate_embedding",
    "synthetic_graph_dataset",
    "load_dataset_dir",
    "load_toy_graph",
    "run_method",
    "ExperimentConfig",
    "load_config",
    "run_benchmark",
]
