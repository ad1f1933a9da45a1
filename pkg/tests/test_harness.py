from __future__ import annotations

import csv
import json
from importlib.resources import files

import numpy as np
import pytest

from graphdr.errors import ValidationError
from graphdr.harness import (
    ExperimentConfig,
    RunRecord,
    expand_cells,
    load_config,
    make_dataset,
    run_benchmark,
    run_method,
    summarize,
)


def _cfg(**over):
    doc = {
        "datasets": [{"name": "moons", "n": 100}],
        "methods": [{"name": "pca", "params": {"input": "features"}},
                    {"name": "gnumap", "params": {"epochs": 20}, "grid": {"hidden": [16, 32]}}],
        "metrics": ["accuracy", "overlap", "davies_bouldin"],
        "seeds": [0, 1],
        "folds": 5,
    }
    doc.update(over)
    return ExperimentConfig.from_dict(doc)


def _rows(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# validation


@pytest.mark.parametrize("doc, needle", [
    ({"methods": ["pca", "pca"]}, "duplicate method"),
    ({"epochz": 3}, "unknown key 'epochz'"),
    ({"methods": [{"name": "gnumap", "params": {"epochz": 3}}]}, "unknown hyperparameter 'epochz'"),
    ({"methods": ["umapp"]}, "unknown method"),
    ({"metrics": ["acuracy"]}, "unknown metric"),
    ({"datasets": ["blobz"]}, "unknown dataset"),
    ({"seeds": [0, 0]}, "duplicate seeds"),
    ({"repeats": 3, "seeds": [0, 1]}, "disagrees"),
    ({"methods": [{"name": "gnumap", "params": {"lr": 0.1}, "grid": {"lr": [0.1]}}]}, "both fixed and gridded"),
])
def test_validation_errors(doc, needle):
    base = {"datasets": ["moons"], "methods": ["pca"]}
    base.update(doc)
    with pytest.raises(ValidationError) as err:
        ExperimentConfig.from_dict(base)
    assert needle in str(err.value)


def test_validation_lists_every_problem():
    with pytest.raises(ValidationError) as err:
        ExperimentConfig.from_dict({"datasets": ["moons"], "methods": ["pca"], "foo": 1, "bar": 2})
    assert "'foo'" in str(err.value) and "'bar'" in str(err.value)


def test_defaults_and_packaged_configs():
    cfg = ExperimentConfig.from_dict({"datasets": ["moons"], "methods": ["pca"]})
    assert cfg.seeds == list(range(10)) and cfg.repeats == 10
    t1 = load_config(str(files("graphdr") / "configs" / "table1.json"))
    assert len(expand_cells(t1)) == 480
    assert load_config(str(files("graphdr") / "configs" / "smoke.json")).repeats == 1


def test_cell_digests_unique_and_stable():
    cells = expand_cells(_cfg())
    assert len(cells) == 6
    assert len({c["digest"] for c in cells}) == 6
    assert [c["digest"] for c in cells] == [c["digest"] for c in expand_cells(_cfg())]


# ---------------------------------------------------------------------------
# runs


def test_smoke_config_one_record(tmp_path):
    cfg = load_config(str(files("graphdr") / "configs" / "smoke.json"))
    res = run_benchmark(cfg, output_dir=tmp_path)
    assert len(res.records) == 1 and res.records[0].status == "ok"
    rows = _rows(tmp_path / "summary.csv")
    assert {r["metric"] for r in rows} == {"accuracy", "spearman", "overlap"}
    emb = tmp_path / "embeddings" / f"{res.records[0].digest}.csv"
    lines = emb.read_text().splitlines()
    assert lines[0] == "p_1,p_2" and len(lines) == 201
    assert res.records[0].loss["all_finite"]


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    return run_benchmark(_cfg(), output_dir=out), out


def test_summary_recomputed_from_records(small_run):
    res, out = small_run
    recs = [RunRecord.from_json(line) for line in (out / "records.jsonl").read_text().splitlines()]
    assert len(recs) == 6
    sel = {(r["dataset"], r["method"]): r for r in _rows(out / "selection.csv")}
    for row in _rows(out / "summary.csv"):
        params = json.loads(sel[(row["dataset"], row["method"])]["selected_params"])
        vals = [r.metrics[row["metric"]] for r in recs
                if r.method == row["method"] and r.params == params and r.status == "ok"]
        assert float(row["mean"]) == pytest.approx(np.mean(vals), abs=1e-12)
        assert float(row["std"]) == pytest.approx(np.std(vals, ddof=1), abs=1e-12)
        assert int(row["n_runs"]) == len(vals)


def test_selection_picks_best_grid_cell(small_run):
    res, out = small_run
    g = [r for r in res.records if r.method == "gnumap"]
    means = {gi: np.mean([r.metrics["accuracy"] for r in g if r.grid_index == gi]) for gi in (0, 1)}
    best = max(means, key=lambda k: (means[k], -k))
    row = next(r for r in res.selection_rows if r["method"] == "gnumap")
    assert json.loads(row["selected_params"])["hidden"] == [16, 32][best]
    assert row["label_selected"] == "true"


def test_lower_is_better_selection():
    def rec(gi, v):
        return RunRecord("d%d" % gi, "x", "m", {"g": gi}, 0, gi, "ok", "", {"davies_bouldin": v}, {}, {}, 0.0)

    _, sel = summarize([rec(0, 2.0), rec(1, 0.5)], ["davies_bouldin"], "davies_bouldin")
    assert json.loads(sel[0]["selected_params"]) == {"g": 1}


def test_resume_skips_recorded_cells(small_run, tmp_path):
    res, out = small_run
    lines = (out / "records.jsonl").read_text().splitlines()
    (tmp_path / "records.jsonl").write_text("\n".join(lines[:4]) + "\n{\"trunc")
    logs = []
    res2 = run_benchmark(_cfg(), output_dir=tmp_path, resume=True, log=logs.append)
    assert "4 already recorded, 2 to run" in logs[0]
    assert (tmp_path / "summary.csv").read_bytes() == (out / "summary.csv").read_bytes()
    assert [r.digest for r in res2.records] == [r.digest for r in res.records]


def test_workers_give_identical_summary(small_run, tmp_path):
    _, out = small_run
    run_benchmark(_cfg(), output_dir=tmp_path, workers=2)
    assert (tmp_path / "summary.csv").read_bytes() == (out / "summary.csv").read_bytes()
    assert (tmp_path / "selection.csv").read_bytes() == (out / "selection.csv").read_bytes()


def test_failed_and_reserved_cells_recorded(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "datasets": [{"name": "circles", "n": 100, "k_graph": 3, "params": {"noise": 0.0}}],
        "methods": [{"name": "isomap", "params": {"k": 1}}, "dgi", {"name": "pca"}],
        "metrics": ["overlap"], "seeds": [0], "folds": 5,
    })
    res = run_benchmark(cfg, output_dir=tmp_path)
    status = {r.method: r for r in res.records}
    assert status["isomap"].status == "error" and "ConnectivityError" in status["isomap"].error
    assert status["dgi"].status == "not_implemented"
    assert status["pca"].status == "ok"
    sel = {r["method"]: r for r in res.selection_rows}
    assert sel["isomap"]["n_failed"] == "1"
    assert not any(r["method"] == "isomap" for r in res.summary_rows)


def test_run_method_every_registered_method():
    ds = make_dataset({"name": "moons", "n": 60, "k_graph": 8}, 0)
    quick = {"gnumap": {"epochs": 3}, "gae": {"epochs": 3}, "vgae": {"epochs": 3}, "grace": {"epochs": 3},
             "ccassg": {"epochs": 3}, "tsne": {"iters": 20}, "umap": {"epochs": 5}, "densmap": {"epochs": 5},
             "isomap": {"k": 8}, "lle": {"k": 8}}
    from graphdr.harness import METHODS

    for name in METHODS:
        out = run_method(name, ds, quick.get(name, {}), seed=0)
        assert out.embedding.shape == (60, 2) and np.all(np.isfinite(out.embedding)), name
