"""Evaluation protocols: runtime scaling, input dimension, noise and initialization robustness.

Every protocol takes a method either as a registry name or as a callable
``runner(ds, params, seed) -> EmbeddingResult | ndarray``, which is how the
calibrated stubs in the tests are plugged in.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import GraphDataset
from .errors import ContractError, ValidationError
from .harness import make_dataset, run_method
from .metrics import evaluate_embedding, spearman
from .numerics import svd_thin
from .plotting import line_plot_svg

__all__ = [
    "INIT_SCHEMES",
    "ScalingResult",
    "DimensionResult",
    "NoiseResult",
    "InitResult",
    "scalability_n",
    "scalability_p",
    "robustness_noise",
    "robustness_init",
    "pca_features",
]

INIT_SCHEMES = ("normal", "xavier_uniform", "xavier_normal")
NOISE_GENERATORS = ("circles", "moons")


def _runner(method):
    if callable(method):
        return method
    return lambda ds, params, seed: run_method(method, ds, params, seed)


def _embedding(out) -> np.ndarray:
    return np.asarray(getattr(out, "embedding", out), dtype=np.float64)


def _spec(dataset) -> dict:
    if isinstance(dataset, str):
        return {"name": dataset}
    return dict(dataset) if isinstance(dataset, dict) else {}


def _timed(run, ds, params, seed):
    t0 = time.perf_counter()
    out = run(ds, dict(params), seed)
    return _embedding(out), time.perf_counter() - t0


def _write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        names = list(dict.fromkeys(k for r in rows for k in r))
        writer = csv.DictWriter(fh, fieldnames=names, restval="", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _slope(x, y) -> float:
    return float(np.polyfit(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64), 1)[0])


# ---------------------------------------------------------------------------


@dataclass
class ScalingResult:
    slope: float
    sizes: list
    mean_seconds: list
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)


def scalability_n(method, dataset, sizes, seeds=(0,), params=None, out_dir=None) -> ScalingResult:
    """Least-squares slope of log(runtime) against log(n); only the method call is timed."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 3:
        raise ContractError(f"need at least 3 sizes, got {len(sizes)}")
    run = _runner(method)
    spec = _spec(dataset)
    rows, failures = [], []
    for n in sizes:
        for seed in seeds:
            try:
                ds = dataset(n, seed) if callable(dataset) else make_dataset({**spec, "n": n}, seed)
                _, secs = _timed(run, ds, params or {}, seed)
                rows.append({"n": n, "seed": seed, "seconds": secs, "status": "ok"})
            except Exception as exc:
                failures.append({"n": n, "seed": seed, "error": f"{type(exc).__name__}: {exc}"})
    ok_sizes, means = [], []
    for n in sizes:
        t = [r["seconds"] for r in rows if r["n"] == n]
        if t:
            ok_sizes.append(n)
            means.append(float(np.mean(t)))
    if len(ok_sizes) < 3:
        raise ContractError(f"slope needs 3 successful sizes, got {len(ok_sizes)}; failures: {failures}")
    slope = _slope(np.log(ok_sizes), np.log(means))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "scalability_n.csv", rows)
        line_plot_svg(ok_sizes, {"seconds": means}, out / "scalability_n.svg", logx=True, logy=True,
                      xlabel="n", ylabel="seconds")
    return ScalingResult(slope, ok_sizes, means, rows, failures)


# ---------------------------------------------------------------------------


def pca_features(features, p: int) -> np.ndarray:
    """Centred features projected on their top-``p`` principal directions.

    At full rank this is a rigid motion, so pairwise distances are unchanged.
    """
    x = np.asarray(features, dtype=np.float64)
    xc = x - x.mean(axis=0)
    rank = int(np.linalg.matrix_rank(xc))
    if not 1 <= p <= rank:
        raise ContractError(f"component count {p} must lie in [1, rank={rank}]")
    u, s, _ = svd_thin(xc, p)
    return u * s


@dataclass
class DimensionResult:
    rows: list
    table: dict


def scalability_p(method, dataset, pc_components, seeds=(0,), params=None,
                  metrics=("spearman", "overlap"), out_dir=None) -> DimensionResult:
    """Replace the node features by their top-p principal components and re-run."""
    run = _runner(method)
    spec = _spec(dataset)
    rows = []
    for seed in seeds:
        base = dataset if isinstance(dataset, GraphDataset) else make_dataset(spec, seed)
        for p in pc_components:
            ds = base.with_features(pca_features(base.features, int(p)))
            row = {"p": int(p), "seed": seed}
            try:
                emb, secs = _timed(run, ds, params or {}, seed)
                rep = evaluate_embedding(emb, ds, seed=seed, metrics=metrics)
                row.update({"seconds": secs, "status": "ok", **rep.entries})
            except Exception as exc:
                row.update({"status": "error", "error": f"{type(exc).__name__}: {exc}"})
            rows.append(row)
    table = {}
    for p in pc_components:
        sel = [r for r in rows if r["p"] == int(p) and r["status"] == "ok"]
        table[int(p)] = {m: float(np.mean([r[m] for r in sel if m in r])) for m in metrics
                         if any(m in r for r in sel)}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "scalability_p.csv", rows)
    return DimensionResult(rows, table)


# ---------------------------------------------------------------------------


@dataclass
class NoiseResult:
    levels: list
    means: list
    normalized: list
    slope: float
    trend_spearman: float
    rows: list = field(default_factory=list)


def robustness_noise(method, generator: str, noise_levels, seeds=(0, 1, 2), params=None,
                     metric: str = "accuracy", n: int = 500, out_dir=None) -> NoiseResult:
    """Metric against generator noise; the noise-free level is the baseline."""
    if generator not in NOISE_GENERATORS:
        raise ValidationError(f"generator must be one of {NOISE_GENERATORS}, got {generator!r}")
    levels = [float(v) for v in noise_levels]
    if len(levels) < 3 or 0.0 not in levels:
        raise ContractError("need at least 3 noise levels including 0")
    levels = sorted(levels)
    run = _runner(method)
    rows = []
    for level in levels:
        for seed in seeds:
            row = {"noise": level, "seed": seed}
            try:
                ds = make_dataset({"name": generator, "n": n, "params": {"noise": level}}, seed)
                emb, secs = _timed(run, ds, params or {}, seed)
                rep = evaluate_embedding(emb, ds, seed=seed, metrics=[metric])
                row.update({"seconds": secs, "status": "ok", metric: rep.entries.get(metric, np.nan)})
            except Exception as exc:
                row.update({"status": "error", "error": f"{type(exc).__name__}: {exc}"})
            rows.append(row)
    means = []
    for level in levels:
        vals = [r[metric] for r in rows if r["noise"] == level and r["status"] == "ok"]
        means.append(float(np.mean(vals)) if vals else float("nan"))
    base = means[0]
    normalized = [m / base if base else float("nan") for m in means]
    finite = np.isfinite(means)
    slope = _slope(np.asarray(levels)[finite], np.asarray(means)[finite]) if finite.sum() >= 2 else float("nan")
    trend = spearman(np.asarray(levels)[finite], np.asarray(means)[finite]) if finite.sum() >= 3 else float("nan")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "robustness_noise.csv", rows)
        line_plot_svg(levels, {metric: means}, out / "robustness_noise.svg", xlabel="noise", ylabel=metric)
    return NoiseResult(levels, means, normalized, slope, trend, rows)


# ---------------------------------------------------------------------------


@dataclass
class InitResult:
    scheme_means: dict
    spread: float
    rows: list = field(default_factory=list)


def robustness_init(method, dataset, schemes, seeds=(0,), params=None, metric: str = "accuracy",
                    out_dir=None) -> InitResult:
    """Per-scheme mean of a metric and the range of those means across schemes."""
    schemes = list(schemes)
    bad = [s for s in schemes if s not in INIT_SCHEMES]
    if bad or not schemes:
        raise ValidationError([f"unknown init scheme {s!r}" for s in bad] or ["no schemes given"])
    run = _runner(method)
    spec = _spec(dataset)
    rows = []
    for seed in seeds:
        ds = dataset if isinstance(dataset, GraphDataset) else make_dataset(spec, seed)
        for scheme in schemes:
            row = {"scheme": scheme, "seed": seed}
            try:
                emb, secs = _timed(run, ds, {**(params or {}), "init_scheme": scheme}, seed)
                rep = evaluate_embedding(emb, ds, seed=seed, metrics=[metric])
                row.update({"seconds": secs, "status": "ok", metric: rep.entries.get(metric, np.nan)})
            except Exception as exc:
                row.update({"status": "error", "error": f"{type(exc).__name__}: {exc}"})
            rows.append(row)
    means = {}
    for scheme in schemes:
        vals = [r[metric] for r in rows if r["scheme"] == scheme and r["status"] == "ok"]
        means[scheme] = float(np.mean(vals)) if vals else float("nan")
    vals = np.array(list(means.values()))
    spread = float(vals.max() - vals.min()) if np.all(np.isfinite(vals)) else float("nan")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "robustness_init.csv", rows)
    return InitResult(means, spread, rows)
