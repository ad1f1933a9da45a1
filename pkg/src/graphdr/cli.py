"""Command-line entry point: ``graphdr gen | embed | eval | bench | plot``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .datasets import GENERATORS, load_dataset_dir, read_matrix_csv, save_dataset_dir, synthetic_graph_dataset
from .errors import GraphDRError
from .harness import METHODS, load_config, run_benchmark, run_method, write_embedding_csv
from .metrics import METRIC_NAMES, evaluate_embedding
from .plotting import export_embedding_plot

log = logging.getLogger("graphdr")


def _read_embedding(path) -> np.ndarray:
    """Embedding CSV, with or without the ``p_1,...`` header row."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if lines and lines[0].startswith("p_"):
        rows = [[float(v) for v in line.split(",")] for line in lines[1:] if line.strip()]
        return np.asarray(rows, dtype=np.float64)
    return read_matrix_csv(path)


def cmd_gen(args) -> int:
    params = json.loads(args.params) if args.params else {}
    ds = synthetic_graph_dataset(args.dataset, n=args.n, seed=args.seed, k_graph=args.k, **params)
    out = save_dataset_dir(ds, args.out)
    log.info("wrote %s (%d nodes, %d edges)", out, ds.n, ds.graph.n_edges)
    return 0


def cmd_embed(args) -> int:
    cfg = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    seed = int(cfg.pop("seed", args.seed))
    ds = load_dataset_dir(args.data)
    result = run_method(args.method, ds, cfg, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_embedding_csv(out / "embedding.csv", result.embedding)
    meta = {"method": result.method, "config_digest": result.config_digest, "seed": result.seed,
            "params": cfg, "final_loss": result.loss_trace[-1] if result.loss_trace else None,
            "wall_seconds": result.wall_seconds}
    (out / "result.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote %s in %.1f s", out / "embedding.csv", result.wall_seconds)
    return 0


def cmd_eval(args) -> int:
    emb = _read_embedding(args.embedding)
    ds = load_dataset_dir(args.data)
    metrics = [m.strip() for m in args.metrics.split(",")] if args.metrics else None
    report = evaluate_embedding(emb, ds, metrics=metrics, seed=args.seed)
    print(json.dumps({"entries": report.entries, "flags": report.flags}, indent=2, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    res = run_benchmark(cfg, output_dir=args.out, workers=args.workers, resume=args.resume, log=log.info)
    failed = sum(r.status == "error" for r in res.records)
    log.info("%d records (%d failed) in %s", len(res.records), failed, res.output_dir)
    return 0


def cmd_plot(args) -> int:
    emb = _read_embedding(args.embedding)
    labels = np.loadtxt(args.labels, dtype=np.int64, ndmin=1) if args.labels else None
    export_embedding_plot(emb, labels, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphdr", description="Graph dimensionality-reduction benchmark tools")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic graph dataset directory")
    p.add_argument("--dataset", required=True, choices=sorted(GENERATORS))
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=20, help="neighbours in the k-NN graph")
    p.add_argument("--params", help="generator parameters as a JSON object")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("embed", help="embed a dataset directory with one method")
    p.add_argument("--method", required=True, choices=sorted(METHODS))
    p.add_argument("--config", help="JSON object of hyperparameters (may contain 'seed')")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("eval", help="score an embedding CSV against a dataset directory")
    p.add_argument("--embedding", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics", help="comma-separated subset of " + ",".join(METRIC_NAMES))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="run a benchmark config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true", help="skip cells already in records.jsonl")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", help="override the config's output_dir")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("plot", help="SVG scatter plot of a 2-D embedding")
    p.add_argument("--embedding", required=True)
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except GraphDRError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
