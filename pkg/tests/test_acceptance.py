"""Acceptance criteria 1-11, each printed as one PASS/FAIL line.

Criteria 1-5 read the shared full Table-1 benchmark run; criterion 10 runs it
a second time and compares the summary bytes.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, _table1_run, fd_relative_error, random_graph
from graphdr import autodiff as ad
from graphdr.classical import (
    calibrate_perplexity,
    densmap_loss,
    fuzzy_graph,
    local_radius,
    solve_umap_sigma,
    tsne_affinities,
    tsne_kl_loss,
)
from graphdr.datasets import load_dataset_dir, load_toy_graph, save_dataset_dir
from graphdr.gnn_baselines import ccassg_loss, gae_loss, grace_loss, vgae_kl
from graphdr.gnumap import _pair_loss
from graphdr.graph import knn_graph, shortest_paths, spectral_embedding
from graphdr.harness import _cached_dataset, make_dataset, run_method
from graphdr.metrics import (
    METRIC_NAMES,
    calinski_harabasz,
    davies_bouldin,
    evaluate_embedding,
    frechet_distance,
    geodesic_spearman,
    knn_overlap,
    silhouette,
)
from graphdr.numerics import make_rng


def _report(num: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {num:2d}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES[num] = line
    print(line)


def _summary(run, dataset, method, metric):
    row = next(r for r in run.summary_rows
               if r["dataset"] == dataset and r["method"] == method and r["metric"] == metric)
    return float(row["mean"]), float(row["std"]), int(row["n_runs"])


def _records(run, dataset, method):
    return [r for r in run.records if r.dataset == dataset and r.method == method]


# ---------------------------------------------------------------------------
# 1-5: Table 1


def test_criterion_01_blobs_gnumap(table1_run):
    acc, sd, n = _summary(table1_run, "blobs", "gnumap", "accuracy")
    slowest = max(r.wall_seconds for r in _records(table1_run, "blobs", "gnumap"))
    ok = n == 10 and acc >= 0.95 and slowest < 120
    _report(1, ok, f"blobs GNUMAP accuracy {acc:.3f} +- {sd:.3f} over {n} seeds (>= 0.95); "
                   f"slowest seed {slowest:.1f} s (< 120 s)")
    assert ok


def test_criterion_02_swissroll_gnumap(table1_run):
    sp, sp_sd, n = _summary(table1_run, "swissroll", "gnumap", "spearman")
    ov, ov_sd, _ = _summary(table1_run, "swissroll", "gnumap", "overlap")
    ok = n == 10 and sp >= 0.75 and ov >= 0.90
    _report(2, ok, f"swissroll GNUMAP Spearman {sp:.3f} +- {sp_sd:.3f} (>= 0.75), "
                   f"overlap {ov:.3f} +- {ov_sd:.3f} (>= 0.90)")
    assert ok


def test_criterion_03_moons_circles_gnumap(table1_run):
    moons, m_sd, _ = _summary(table1_run, "moons", "gnumap", "accuracy")
    circles, c_sd, _ = _summary(table1_run, "circles", "gnumap", "accuracy")
    ok = moons >= 0.82 and circles >= 0.60
    _report(3, ok, f"moons accuracy {moons:.3f} +- {m_sd:.3f} (>= 0.82), "
                   f"circles accuracy {circles:.3f} +- {c_sd:.3f} (>= 0.60)")
    assert ok


def test_criterion_04_overlap_ordering(table1_run):
    margins = {}
    for name in ("blobs", "circles", "moons", "swissroll"):
        g, _, _ = _summary(table1_run, name, "gnumap", "overlap")
        a, _, _ = _summary(table1_run, name, "gae", "overlap")
        margins[name] = (g, a, g - a)
    ok = all(m >= 0.03 for _, _, m in margins.values())
    detail = ", ".join(f"{k} {g:.3f} vs {a:.3f}" for k, (g, a, _) in margins.items())
    _report(4, ok, f"GNUMAP vs GAE overlap: {detail} (margin >= 0.03)")
    assert ok


def test_criterion_05_gae_blobs(table1_run):
    acc, sd, n = _summary(table1_run, "blobs", "gae", "accuracy")
    ok = n == 10 and acc >= 0.80
    _report(5, ok, f"blobs GAE accuracy {acc:.3f} +- {sd:.3f} over {n} seeds (>= 0.80)")
    assert ok


# ---------------------------------------------------------------------------
# 6-7: ablations


def _overlap_run(params, seed, metrics=("overlap",)):
    ds = make_dataset({"name": "swissroll", "n": 500}, seed)
    res = run_method("gnumap", ds, params, seed)
    rep = evaluate_embedding(res.embedding, ds, "gnumap", seed, metrics=metrics)
    return rep.entries, res.loss_trace


def test_criterion_06_dbn_ablation():
    with_dbn = [_overlap_run({"use_dbn": True}, s)[0]["overlap"] for s in range(20)]
    without = [_overlap_run({"use_dbn": False}, s)[0]["overlap"] for s in range(20)]
    a, b = float(np.mean(with_dbn)), float(np.mean(without))
    ok = a >= b - 0.02
    _report(6, ok, f"swissroll overlap with DBN {a:.3f}, without {b:.3f}, 20 seeds (with >= without - 0.02)")
    assert ok


AB_GRID = [(1.0, 1.0), (1.92, 0.79), (0.13, 0.81), (0.15, 0.79), (1.57, 0.89)]


def test_criterion_07_alpha_beta_grid():
    parts, ok = [], True
    for alpha, beta in AB_GRID:
        sps, finite = [], True
        for seed in range(3):
            entries, trace = _overlap_run({"alpha": alpha, "beta": beta}, seed, metrics=("spearman",))
            sps.append(entries["spearman"])
            finite = finite and bool(np.all(np.isfinite(trace)))
        mean = float(np.mean(sps))
        ok = ok and finite and mean >= 0.6
        parts.append(f"({alpha}, {beta}) {mean:.3f}{'' if finite else ' non-finite loss'}")
    _report(7, ok, "swissroll Spearman, 3 seeds each (>= 0.6): " + ", ".join(parts))
    assert ok


# ---------------------------------------------------------------------------
# 8: gradients


def _fd(fn, *arrays):
    params = [ad.Parameter(np.array(a, dtype=np.float64)) for a in arrays]
    ad.backward(fn(*params), params)
    worst = 0.0
    for k, p in enumerate(params):
        def f(v, k=k):
            args = [ad.constant(a) for a in arrays]
            args[k] = ad.constant(v)
            return fn(*args).item()
        worst = max(worst, fd_relative_error(f, np.array(arrays[k], dtype=np.float64), p.grad))
    return worst


def test_criterion_08_gradient_suite():
    rng = make_rng(8)
    x = rng.normal(size=(8, 3))
    g = knn_graph(x, 3)
    pos = g.directed_pairs()[0]
    i = np.concatenate([pos[:, 0], [0, 1, 2]])
    j = np.concatenate([pos[:, 1], [7, 6, 5]])
    p = np.concatenate([np.ones(len(pos)), np.zeros(3)])
    y = rng.normal(size=(8, 2))
    pos_l, neg_l = [(0, 1), (1, 2), (3, 4), (4, 5)], [(0, 5), (2, 4), (1, 3)]
    xi = rng.normal(size=(8, 2))
    fg = fuzzy_graph(x, 3)
    fpos, fp = fg.p.directed_pairs()
    fi = np.concatenate([fpos[:, 0], [0, 1, 2]])
    fj = np.concatenate([fpos[:, 1], [7, 6, 5]])
    fpp = np.concatenate([fp, np.zeros(3)])
    log_rp = np.log(local_radius(fg.p.to_scipy(), x))
    ptsne = tsne_affinities(x, 3.0)
    u, v = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))

    losses = {
        "GNUMAP": (lambda t: _pair_loss(t, i, j, p, 1.57, 0.89, 1e-7), (y,)),
        "GAE": (lambda t: gae_loss(t, pos_l, neg_l), (y,)),
        "VGAE": (lambda m, s: ad.add(gae_loss(ad.add(m, ad.mul(ad.exp(s), xi)), pos_l, neg_l), vgae_kl(m, s)),
                 (y, 0.3 * rng.normal(size=(8, 2)))),
        "GRACE": (lambda a, b: grace_loss(a, b, 0.5), (u, v)),
        "CCA-SSG": (lambda a, b: ccassg_loss(a, b, 0.5), (u, v)),
        "t-SNE KL": (lambda t: tsne_kl_loss(t, ptsne), (y,)),
        "UMAP CE": (lambda t: densmap_loss(t, fg.p, log_rp, fi, fj, fpp, 1.57, 0.89, 0.0), (y,)),
        "DensMAP": (lambda t: densmap_loss(t, fg.p, log_rp, fi, fj, fpp, 1.57, 0.89, 2.0), (y,)),
    }
    errs = {name: _fd(fn, *args) for name, (fn, args) in losses.items()}
    ok = all(e < 1e-4 for e in errs.values())
    _report(8, ok, "max relative FD error: " + ", ".join(f"{k} {e:.1e}" for k, e in errs.items()) + " (< 1e-4)")
    assert ok


# ---------------------------------------------------------------------------
# 9: oracles


def _floyd(n, edges):
    d = [[0.0 if a == b else math.inf for b in range(n)] for a in range(n)]
    for a, b in edges:
        d[a][b] = d[b][a] = 1.0
    for k in range(n):
        for a in range(n):
            for b in range(n):
                if d[a][k] + d[k][b] < d[a][b]:
                    d[a][b] = d[a][k] + d[k][b]
    return np.array(d)


def _naive_indices(x, lab):
    ks = sorted(set(lab))
    n = len(x)
    cents = {k: np.mean([x[i] for i in range(n) if lab[i] == k], axis=0) for k in ks}
    scat = {k: np.mean([math.dist(x[i], cents[k]) for i in range(n) if lab[i] == k]) for k in ks}
    db = np.mean([max((scat[k] + scat[m]) / math.dist(cents[k], cents[m]) for m in ks if m != k) for k in ks])
    mean = np.mean(x, axis=0)
    bw = sum(sum(lab == k) * math.dist(cents[k], mean) ** 2 for k in ks)
    wi = sum(math.dist(x[i], cents[lab[i]]) ** 2 for i in range(n))
    ch = (bw / (len(ks) - 1)) / (wi / (n - len(ks)))
    sil = []
    for i in range(n):
        own = [math.dist(x[i], x[t]) for t in range(n) if lab[t] == lab[i] and t != i]
        if not own:
            sil.append(0.0)
            continue
        a = np.mean(own)
        b = min(np.mean([math.dist(x[i], x[t]) for t in range(n) if lab[t] == k]) for k in ks if k != lab[i])
        sil.append((b - a) / max(a, b))
    return db, ch, float(np.mean(sil))


def test_criterion_09_oracle_suite():
    rng = np.random.default_rng(9)
    worst = {"paths": 0.0, "db": 0.0, "ch": 0.0, "sil": 0.0, "frechet": 0.0, "perplexity": 0.0, "sigma": 0.0}
    for trial in range(20):
        n = int(rng.integers(2, 16))
        g = random_graph(n, 0.3, rng)
        edges = list(zip(*g.edge_list()[0].T)) if g.n_edges else []
        d = shortest_paths(g)
        oracle = _floyd(n, edges)
        worst["paths"] = max(worst["paths"], float(np.any(d != oracle)))

        m = int(rng.integers(8, 41))
        x = rng.normal(size=(m, 2))
        lab = np.concatenate([[0, 1, 2], rng.integers(0, 3, m - 3)])
        db, ch, sil = _naive_indices(x, lab)
        worst["db"] = max(worst["db"], abs(davies_bouldin(x, lab) - db))
        worst["ch"] = max(worst["ch"], abs(calinski_harabasz(x, lab) - ch) / ch)
        worst["sil"] = max(worst["sil"], abs(silhouette(x, lab) - sil))

        a = rng.normal(size=(30, 2)) @ rng.normal(size=(2, 2))
        b = rng.normal(size=(25, 2)) @ rng.normal(size=(2, 2)) + rng.normal(size=2)
        s1, s2 = np.cov(a, rowvar=False), np.cov(b, rowvar=False)
        w, vec = np.linalg.eigh(s1)
        r1 = vec @ np.diag(np.sqrt(w)) @ vec.T
        w2 = np.linalg.eigvalsh(r1 @ s2 @ r1)
        direct = ((a.mean(0) - b.mean(0)) ** 2).sum() + np.trace(s1 + s2) - 2 * np.sqrt(np.clip(w2, 0, None)).sum()
        worst["frechet"] = max(worst["frechet"], abs(frechet_distance(a, b) - direct))

        perp = float(rng.uniform(2, 8))
        cond = calibrate_perplexity(rng.normal(size=(20, 3)), perp).conditional
        for row in cond:
            r = row[row > 0]
            worst["perplexity"] = max(worst["perplexity"], abs(2 ** (-(r * np.log2(r)).sum()) - perp))
        dists = np.sort(rng.uniform(0.1, 3.0, size=6))
        k = len(dists)
        sigma = solve_umap_sigma(dists, dists[0], math.log2(k))
        worst["sigma"] = max(worst["sigma"], abs(np.exp(-(dists - dists[0]) / sigma).sum() - math.log2(k)))
    ok = (worst["paths"] == 0 and worst["db"] < 1e-9 and worst["ch"] < 1e-9 and worst["sil"] < 1e-9
          and worst["frechet"] < 1e-8 and worst["perplexity"] < 1e-4 and worst["sigma"] < 1e-4)
    _report(9, ok, "worst deviations over 20 trials: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


# ---------------------------------------------------------------------------
# 10: determinism


def test_criterion_10_determinism(table1_run, tmp_path_factory):
    _cached_dataset.cache_clear()
    second = _table1_run(tmp_path_factory, "table1_b")
    a = (table1_run.output_dir / "summary.csv").read_bytes()
    b = (second.output_dir / "summary.csv").read_bytes()
    ok = a == b and len(a) > 0
    _report(10, ok, f"two full Table-1 runs: summary.csv identical={a == b} ({len(a)} bytes); "
                    f"run times {table1_run.elapsed / 60:.1f} and {second.elapsed / 60:.1f} min")
    assert ok


# ---------------------------------------------------------------------------
# 11: bundled toy graph


def test_criterion_11_toy_graph(tmp_path):
    ds = load_toy_graph()
    back = load_dataset_dir(save_dataset_dir(ds, tmp_path / "toy"))
    roundtrip = (back.graph == ds.graph and np.array_equal(back.features, ds.features)
                 and np.array_equal(back.labels, ds.labels))
    emb = run_method("gnumap", ds, {}, 0).embedding
    rep = evaluate_embedding(emb, ds, "gnumap", 0)
    finite = all(np.isfinite(v) for v in rep.entries.values()) and set(rep.entries) <= set(METRIC_NAMES)
    q, _ = np.linalg.qr(make_rng(1).normal(size=(2, 2)))
    moved = emb @ q + np.array([3.0, -7.0])
    invariant = (abs(knn_overlap(moved, ds.graph) - knn_overlap(emb, ds.graph)) < 1e-6
                 and abs(geodesic_spearman(moved, ds.graph) - geodesic_spearman(emb, ds.graph)) < 1e-6
                 and abs(davies_bouldin(moved, ds.labels) - davies_bouldin(emb, ds.labels)) < 1e-6)
    baseline = evaluate_embedding(spectral_embedding(ds.graph, 2), ds, "spectral", 0, metrics=["accuracy"])
    ok = ds.n == 200 and roundtrip and finite and invariant
    _report(11, ok, f"toy SBM n={ds.n}: round-trip {roundtrip}, metrics finite {finite}, rigid invariance "
                    f"{invariant}; GNUMAP accuracy {rep.entries.get('accuracy', float('nan')):.3f} vs spectral "
                    f"{baseline.entries['accuracy']:.3f}")
    assert ok
