"""Config-driven benchmark runs: validation, cell execution, summaries and outputs.

A benchmark is a JSON document (schema in the README)
expanded into cells ``(dataset, method, grid cell, seed)``.  Every cell is
identified by the sha256 digest of its canonical JSON, which is also the name
of its embedding file and the key used by ``--resume``.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import inspect
import itertools
import json
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import classical
from .datasets import GENERATORS, GraphDataset, load_dataset_dir, synthetic_graph_dataset, load_toy_graph
from .errors import ContractError, ValidationError
from .gnn_baselines import AugmentConfig, ContrastConfig, GaeConfig, ccassg_train, gae_train, grace_train, vgae_train
from .gnumap import GnumapConfig, gnumap_train
from .metrics import METRIC_NAMES, evaluate_embedding
from .results import EmbeddingResult, config_digest

__all__ = [
    "MethodSpec",
    "METHODS",
    "RESERVED_METHODS",
    "LOWER_IS_BETTER",
    "ExperimentConfig",
    "RunRecord",
    "BenchmarkResult",
    "load_config",
    "make_dataset",
    "run_method",
    "expand_cells",
    "run_benchmark",
    "summarize",
    "write_embedding_csv",
]

LOWER_IS_BETTER = frozenset({"davies_bouldin", "frechet"})
SUMMARY_HEADER = ("dataset", "method", "metric", "mean", "std", "n_runs")
SELECTION_HEADER = ("dataset", "method", "selected_params", "selection_metric", "selection_value",
                    "grid_size", "label_selected", "n_ok", "n_failed")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# method registry


@dataclass(frozen=True)
class MethodSpec:
    name: str
    runner: Callable[[GraphDataset, dict, int], EmbeddingResult]
    params: frozenset
    kind: str  # "gnn" or "classical"


def _fields(*classes, drop=("seed",)) -> frozenset:
    names = set()
    for cls in classes:
        names.update(f.name for f in dataclasses.fields(cls))
    return frozenset(names - set(drop))


def _kwargs(fn, drop=("data", "x", "g", "seed")) -> frozenset:
    return frozenset(p for p in inspect.signature(fn).parameters if p not in drop)


def _split(params: dict, cls) -> dict:
    names = {f.name for f in dataclasses.fields(cls)}
    return {k: v for k, v in params.items() if k in names}


def _gnumap(ds, params, seed):
    return gnumap_train(ds, GnumapConfig(seed=seed, **params))


def _gae(ds, params, seed):
    return gae_train(ds, GaeConfig(seed=seed, **params))


def _vgae(ds, params, seed):
    return vgae_train(ds, GaeConfig(seed=seed, **params))


def _contrastive(train):
    def run(ds, params, seed):
        aug = AugmentConfig(**_split(params, AugmentConfig))
        cfg = ContrastConfig(seed=seed, **_split(params, ContrastConfig))
        return train(ds, aug, cfg)
    return run


def _point_input(ds: GraphDataset, params: dict) -> np.ndarray:
    source = params.get("input", "coords")
    if source == "coords" and ds.ground_truth_coords is not None:
        return ds.ground_truth_coords
    if source in ("coords", "features"):
        return ds.features
    raise ContractError(f"input must be 'coords' or 'features', got {source!r}")


def _classical(fn, seeded: bool):
    def run(ds, params, seed):
        kw = {k: v for k, v in params.items() if k != "input"}
        if seeded:
            kw["seed"] = seed
        return fn(_point_input(ds, params), **kw)
    return run


def _laplacian(ds, params, seed):
    kw = {k: v for k, v in params.items() if k != "input"}
    points = _point_input(ds, params) if kw.get("heat_t") is not None else None
    return classical.laplacian_eigenmap(ds.graph, points=points, **kw)


METHODS: dict[str, MethodSpec] = {
    "gnumap": MethodSpec("gnumap", _gnumap, _fields(GnumapConfig), "gnn"),
    "gae": MethodSpec("gae", _gae, _fields(GaeConfig), "gnn"),
    "vgae": MethodSpec("vgae", _vgae, _fields(GaeConfig), "gnn"),
    "grace": MethodSpec("grace", _contrastive(grace_train), _fields(AugmentConfig, ContrastConfig), "gnn"),
    "ccassg": MethodSpec("ccassg", _contrastive(ccassg_train), _fields(AugmentConfig, ContrastConfig), "gnn"),
    "pca": MethodSpec("pca", _classical(classical.pca, False), _kwargs(classical.pca) | {"input"}, "classical"),
    "isomap": MethodSpec("isomap", _classical(classical.isomap, False),
                         _kwargs(classical.isomap, drop=("data", "graph")) | {"input"}, "classical"),
    "lle": MethodSpec("lle", _classical(classical.lle, False), _kwargs(classical.lle) | {"input"}, "classical"),
    "laplacian_eigenmap": MethodSpec("laplacian_eigenmap", _laplacian,
                                     frozenset({"q", "heat_t", "input"}), "classical"),
    "tsne": MethodSpec("tsne", _classical(classical.tsne, True), _kwargs(classical.tsne) | {"input"}, "classical"),
    "umap": MethodSpec("umap", _classical(classical.umap_euclidean, True),
                       _kwargs(classical.umap_euclidean) | {"input"}, "classical"),
    "densmap": MethodSpec("densmap", _classical(classical.densmap, True),
                          _kwargs(classical.densmap) | {"input"}, "classical"),
}

# cited comparison methods whose internals are out of scope; their cells are
# recorded with status "not_implemented"
RESERVED_METHODS = frozenset({"dgi", "bgrl", "spagcn"})


def run_method(name: str, ds: GraphDataset, params: dict | None = None, seed: int = 0) -> EmbeddingResult:
    if name in RESERVED_METHODS:
        raise NotImplementedError(f"{name} is a reserved method name without an implementation")
    if name not in METHODS:
        raise ContractError(f"unknown method {name!r}")
    return METHODS[name].runner(ds, dict(params or {}), int(seed))


# ---------------------------------------------------------------------------
# datasets


DATASET_KEYS = frozenset({"name", "n", "params", "k_graph", "feat_components", "path"})
TOY_NAME = "toy_sbm"


def make_dataset(spec: dict, seed: int) -> GraphDataset:
    """Build the dataset of one cell; synthetic generators are reseeded per cell."""
    if "path" in spec:
        ds = load_dataset_dir(spec["path"])
        ds.name = spec.get("name", ds.name)
        return ds
    name = spec["name"]
    if name == TOY_NAME:
        return load_toy_graph()
    return synthetic_graph_dataset(
        name, n=int(spec.get("n", 500)), seed=int(seed),
        k_graph=int(spec.get("k_graph", 20)),
        feat_components=int(spec.get("feat_components", 10)),
        **spec.get("params", {}),
    )


@functools.lru_cache(maxsize=8)
def _cached_dataset(spec_json: str, seed: int) -> GraphDataset:
    return make_dataset(json.loads(spec_json), seed)


# ---------------------------------------------------------------------------
# config


CONFIG_KEYS = frozenset({"name", "datasets", "methods", "metrics", "seeds", "repeats", "output_dir",
                         "selection_metric", "folds", "workers"})
METHOD_KEYS = frozenset({"name", "params", "grid"})


@dataclass
class ExperimentConfig:
    datasets: list
    methods: list
    metrics: list
    seeds: list
    output_dir: str = "results"
    name: str = "benchmark"
    selection_metric: str = "accuracy"
    folds: int = 10
    workers: int = 1

    @property
    def repeats(self) -> int:
        return len(self.seeds)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        problems = []
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object")
        for key in sorted(set(doc) - CONFIG_KEYS):
            problems.append(f"unknown key {key!r}")
        for key in ("datasets", "methods"):
            if not doc.get(key):
                problems.append(f"{key!r} must be a nonempty list")

        datasets = []
        for pos, d in enumerate(doc.get("datasets") or []):
            if isinstance(d, str):
                d = {"name": d}
            if not isinstance(d, dict):
                problems.append(f"datasets[{pos}] must be a string or an object")
                continue
            for key in sorted(set(d) - DATASET_KEYS):
                problems.append(f"datasets[{pos}]: unknown key {key!r}")
            name = d.get("name")
            if "path" not in d and name not in GENERATORS and name != TOY_NAME:
                problems.append(f"datasets[{pos}]: unknown dataset {name!r}")
            datasets.append(d)
        labels = [d.get("name", d.get("path")) for d in datasets]
        if len(set(labels)) != len(labels):
            problems.append("duplicate dataset entry")

        methods = []
        seen = set()
        for pos, m in enumerate(doc.get("methods") or []):
            if isinstance(m, str):
                m = {"name": m}
            if not isinstance(m, dict):
                problems.append(f"methods[{pos}] must be a string or an object")
                continue
            for key in sorted(set(m) - METHOD_KEYS):
                problems.append(f"methods[{pos}]: unknown key {key!r}")
            name = m.get("name")
            if name in seen:
                problems.append(f"duplicate method entry {name!r}")
            seen.add(name)
            if name in RESERVED_METHODS:
                methods.append({"name": name, "params": {}, "grid": {}})
                continue
            if name not in METHODS:
                problems.append(f"methods[{pos}]: unknown method {name!r}")
                continue
            params = dict(m.get("params", {}))
            grid = dict(m.get("grid", {}))
            allowed = METHODS[name].params
            for key in sorted((set(params) | set(grid)) - allowed):
                problems.append(f"methods[{pos}] ({name}): unknown hyperparameter {key!r}")
            for key, values in grid.items():
                if not isinstance(values, list) or not values:
                    problems.append(f"methods[{pos}] ({name}): grid entry {key!r} must be a nonempty list")
                if key in params:
                    problems.append(f"methods[{pos}] ({name}): {key!r} is both fixed and gridded")
            methods.append({"name": name, "params": params, "grid": grid})

        metrics = list(doc.get("metrics", ["accuracy", "calinski_harabasz", "davies_bouldin", "spearman", "overlap"]))
        for name in metrics:
            if name not in METRIC_NAMES:
                problems.append(f"unknown metric {name!r}")
        if len(set(metrics)) != len(metrics):
            problems.append("duplicate metric entry")
        selection = doc.get("selection_metric", "accuracy")
        if selection not in METRIC_NAMES:
            problems.append(f"unknown selection metric {selection!r}")

        repeats = doc.get("repeats")
        seeds = doc.get("seeds")
        if seeds is None:
            repeats = 10 if repeats is None else repeats
            if not isinstance(repeats, int) or repeats < 1:
                problems.append("repeats must be a positive integer")
                seeds = []
            else:
                seeds = list(range(repeats))
        else:
            if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
                problems.append("seeds must be a nonempty list of integers")
            elif len(set(seeds)) != len(seeds):
                problems.append("duplicate seeds")
            if repeats is not None and isinstance(seeds, list) and repeats != len(seeds):
                problems.append(f"repeats={repeats} disagrees with {len(seeds)} seeds")
        workers = doc.get("workers", 1)
        if not isinstance(workers, int) or workers < 1:
            problems.append("workers must be a positive integer")
        folds = doc.get("folds", 10)
        if not isinstance(folds, int) or folds < 1:
            problems.append("folds must be a positive integer")
        if problems:
            raise ValidationError(problems)
        return cls(datasets=datasets, methods=methods, metrics=metrics, seeds=list(seeds),
                   output_dir=str(doc.get("output_dir", "results")), name=str(doc.get("name", "benchmark")),
                   selection_metric=selection, folds=folds, workers=workers)


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    return ExperimentConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# cells and records


def _grid_cells(method: dict) -> list[dict]:
    grid = method["grid"]
    keys = sorted(grid)
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cell = dict(method["params"])
        cell.update(zip(keys, combo))
        cells.append(cell)
    return cells


def _dataset_label(spec: dict) -> str:
    return str(spec.get("name", Path(spec.get("path", "dataset")).name))


def expand_cells(cfg: ExperimentConfig) -> list[dict]:
    """All (dataset, method, grid cell, seed) cells in a fixed order, each with its digest."""
    cells = []
    for d in cfg.datasets:
        for m in cfg.methods:
            for gi, params in enumerate(_grid_cells(m)):
                for seed in cfg.seeds:
                    key = {"dataset": d, "method": m["name"], "params": params, "seed": seed,
                           "metrics": cfg.metrics, "folds": cfg.folds}
                    cells.append({**key, "dataset_label": _dataset_label(d), "grid_index": gi,
                                  "digest": config_digest(key)})
    return cells


@dataclass
class RunRecord:
    digest: str
    dataset: str
    method: str
    params: dict
    seed: int
    grid_index: int = 0
    status: str = "ok"
    error: str = ""
    metrics: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    loss: dict = field(default_factory=dict)
    wall_seconds: float = 0.0

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, default=str)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls(**json.loads(line))


def write_embedding_csv(path, emb) -> None:
    emb = np.atleast_2d(np.asarray(emb, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(f"p_{c + 1}" for c in range(emb.shape[1])) + "\n")
        for row in emb:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _loss_summary(trace, window: int = 50) -> dict:
    if not trace:
        return {}
    t = np.asarray(trace, dtype=np.float64)
    w = min(window, max(1, t.size // 2))
    return {"epochs": int(t.size), "final": float(t[-1]), "all_finite": bool(np.all(np.isfinite(t))),
            "first_median": float(np.median(t[:w])), "last_median": float(np.median(t[-w:]))}


def _execute_cell(cell: dict, out_dir: str | None) -> RunRecord:
    rec = RunRecord(digest=cell["digest"], dataset=cell["dataset_label"], method=cell["method"],
                    params=cell["params"], seed=cell["seed"], grid_index=cell["grid_index"])
    start = time.perf_counter()
    if cell["method"] in RESERVED_METHODS:
        rec.status = "not_implemented"
        rec.error = f"{cell['method']} is reserved; its internals are outside this package"
        return rec
    try:
        ds = _cached_dataset(json.dumps(cell["dataset"], sort_keys=True), cell["seed"])
        result = run_method(cell["method"], ds, cell["params"], cell["seed"])
        report = evaluate_embedding(result.embedding, ds, cell["method"], cell["seed"],
                                    metrics=cell["metrics"], folds=cell["folds"])
        rec.loss = _loss_summary(result.loss_trace)
        rec.metrics = dict(report.entries)
        rec.flags = dict(report.flags)
        if out_dir is not None:
            emb_dir = Path(out_dir) / "embeddings"
            emb_dir.mkdir(parents=True, exist_ok=True)
            write_embedding_csv(emb_dir / f"{cell['digest']}.csv", result.embedding)
    except Exception as exc:  # a failing cell is recorded, the run continues
        rec.status = "error"
        rec.error = f"{type(exc).__name__}: {exc}"
        rec.flags = {"traceback": traceback.format_exc(limit=3)}
    rec.wall_seconds = time.perf_counter() - start
    return rec


# ---------------------------------------------------------------------------
# summaries


@dataclass
class BenchmarkResult:
    records: list
    summary_rows: list
    selection_rows: list
    output_dir: Path | None = None


def _better(a: float, b: float, metric: str) -> bool:
    return a < b if metric in LOWER_IS_BETTER else a > b


def summarize(records, metrics, selection_metric: str = "accuracy", cell_order=None):
    """Per (dataset, method): pick the grid cell with the best mean selection metric
    and report mean and std (ddof=1; 0 for a single run) of every metric over seeds."""
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.dataset, rec.method), {}).setdefault(rec.grid_index, []).append(rec)
    order = cell_order or sorted(groups)
    summary, selection = [], []
    for key in order:
        if key not in groups:
            continue
        cells = groups[key]
        best, best_val = None, None
        for gi in sorted(cells):
            vals = [r.metrics[selection_metric] for r in cells[gi]
                    if r.status == "ok" and selection_metric in r.metrics]
            if not vals:
                continue
            m = float(np.mean(vals))
            if best is None or _better(m, best_val, selection_metric):
                best, best_val = gi, m
        all_recs = [r for rs in cells.values() for r in rs]
        n_ok = sum(r.status == "ok" for r in all_recs)
        if best is None:
            # no cell produced the selection metric; fall back to the first cell with any success
            ok_cells = [gi for gi in sorted(cells) if any(r.status == "ok" for r in cells[gi])]
            best = ok_cells[0] if ok_cells else None
        params = json.dumps(cells[best][0].params, sort_keys=True) if best is not None else ""
        selection.append({
            "dataset": key[0], "method": key[1], "selected_params": params,
            "selection_metric": selection_metric,
            "selection_value": "" if best_val is None else _fmt(best_val),
            "grid_size": str(len(cells)), "label_selected": str(len(cells) > 1).lower(),
            "n_ok": str(n_ok), "n_failed": str(len(all_recs) - n_ok),
        })
        if best is None:
            continue
        chosen = sorted((r for r in cells[best] if r.status == "ok"), key=lambda r: r.seed)
        for metric in metrics:
            vals = np.array([r.metrics[metric] for r in chosen if metric in r.metrics], dtype=np.float64)
            if vals.size == 0:
                continue
            std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            summary.append({"dataset": key[0], "method": key[1], "metric": metric,
                            "mean": _fmt(vals.mean()), "std": _fmt(std), "n_runs": str(vals.size)})
    return summary, selection


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(header), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _read_records(path: Path) -> dict:
    done = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                try:
                    rec = RunRecord.from_json(line)
                except (json.JSONDecodeError, TypeError):
                    continue  # a line cut short by a kill
                done[rec.digest] = rec
    return done


def run_benchmark(cfg: ExperimentConfig, output_dir=None, workers: int | None = None,
                  resume: bool = False, log: Callable[[str], None] | None = None) -> BenchmarkResult:
    """Execute every cell of ``cfg`` and write records, summary, selection and embeddings.

    Records are appended to ``records.jsonl`` as cells finish, so a killed run
    can be resumed; with ``resume`` the cells already recorded there are
    skipped.  The final files are rewritten in cell order.
    """
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = cfg.workers if workers is None else workers
    cells = expand_cells(cfg)
    rec_path = out / "records.jsonl"
    done = _read_records(rec_path) if resume else {}
    if not resume and rec_path.exists():
        rec_path.unlink()
    todo = [c for c in cells if c["digest"] not in done]
    if log:
        log(f"{len(cells)} cells, {len(cells) - len(todo)} already recorded, {len(todo)} to run")

    results = dict(done)
    with open(rec_path, "a", encoding="utf-8") as fh:
        def keep(rec):
            results[rec.digest] = rec
            fh.write(rec.to_json() + "\n")
            fh.flush()
            if log:
                log(f"[{len(results)}/{len(cells)}] {rec.dataset} {rec.method} seed={rec.seed} {rec.status}")

        if workers <= 1:
            for c in todo:
                keep(_execute_cell(c, str(out)))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for rec in pool.map(_execute_cell, todo, itertools.repeat(str(out))):
                    keep(rec)

    records = [results[c["digest"]] for c in cells]
    with open(rec_path, "w", encoding="utf-8") as fh:
        fh.writelines(r.to_json() + "\n" for r in records)
    order = list(dict.fromkeys((c["dataset_label"], c["method"]) for c in cells))
    summary, selection = summarize(records, cfg.metrics, cfg.selection_metric, order)
    _write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    _write_csv(out / "selection.csv", SELECTION_HEADER, selection)
    timing = {}
    for r in records:
        timing.setdefault((r.dataset, r.method), []).append(r.wall_seconds)
    _write_csv(out / "timing.csv", ("dataset", "method", "mean_seconds", "total_seconds"),
               [{"dataset": d, "method": m, "mean_seconds": f"{np.mean(v):.3f}",
                 "total_seconds": f"{np.sum(v):.3f}"} for (d, m), v in timing.items()])
    return BenchmarkResult(records, summary, selection, out)
