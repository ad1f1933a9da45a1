from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from graphdr.graph import SparseGraph

settings.register_profile("graphdr", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("graphdr")


def path_graph(n: int) -> SparseGraph:
    return SparseGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> SparseGraph:
    return SparseGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> SparseGraph:
    return SparseGraph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_graph(n: int, p: float, rng, weighted: bool = False) -> SparseGraph:
    edges, w = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.append((i, j))
                w.append(rng.uniform(0.1, 1.0) if weighted else 1.0)
    return SparseGraph.from_edges(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2), np.asarray(w))


def fd_relative_error(f, x: np.ndarray, grad: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between ``grad`` and central differences of scalar ``f`` at ``x``."""
    num = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        num[idx] = (f(xp) - f(xm)) / (2 * h)
    scale = max(np.abs(num).max(), np.abs(grad).max(), 1e-8)
    return float(np.abs(num - grad).max() / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TABLE1_CONFIG = "table1.json"


def _table1_run(tmp_path_factory, tag):
    from importlib.resources import files

    from graphdr.harness import load_config, run_benchmark

    cfg = load_config(str(files("graphdr") / "configs" / TABLE1_CONFIG))
    out = tmp_path_factory.mktemp(tag)
    import time

    t0 = time.perf_counter()
    res = run_benchmark(cfg, output_dir=out)
    res.elapsed = time.perf_counter() - t0
    return res


@pytest.fixture(scope="session")
def table1_run(tmp_path_factory):
    """The full Table-1 benchmark, run once per test session and shared."""
    return _table1_run(tmp_path_factory, "table1_a")


@pytest.fixture(scope="session")
def table1_records(table1_run):
    return table1_run.records


# acceptance outcome lines, echoed again at the end of the session
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
