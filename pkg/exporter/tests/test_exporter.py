import json
import pickle
import time

import numpy as np
import pytest
from sklearn.ensemble import HistGradientBoostingClassifier, RandomForestClassifier
from sklearn.tree import DecisionTreeClassifier

from forest_exporter.cli import main
from forest_exporter.convert import (
    ExportError,
    export_boosted,
    export_decision_forest,
    n_trees_to_export,
)
from forest_exporter.tabular import read_table

# the consumer side of the interchange format
from treerules.ensemble import load_ensemble, save_ensemble


def write_numeric_csv(path, n=120, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3)).round(4)
    y = ((x[:, 0] + 0.7 * x[:, 1] - 0.2 * x[:, 2]) > 0).astype(int)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("f0,f1,f2,target\n")
        for row, label in zip(x, y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{label}\n")
    return path


def write_mixed_csv(path, n=200, seed=1):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=n).round(4)
    color = rng.choice(["red", "green", "blue", "violet"], size=n)
    y = ((x0 > 0) | np.isin(color, ["green", "violet"])).astype(int)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("score,color,target\n")
        for i in range(n):
            fh.write(f"{float(x0[i])!r},{color[i]},{y[i]}\n")
    return path


def probe_rows(table, k=50, seed=9):
    rng = np.random.default_rng(seed)
    idx = rng.choice(table.x.shape[0], size=min(k, table.x.shape[0]), replace=False)
    return table.x[idx]


# --- table encoding ------------------------------------------------------------


def test_read_table_kinds_and_codes(tmp_path):
    path = write_mixed_csv(tmp_path / "mixed.csv")
    table = read_table(path, "target")
    assert table.kinds == ["continuous", "categorical"]
    assert table.feature_names == ["score", "color"]
    assert sorted(table.categories[1]) == ["blue", "green", "red", "violet"]
    assert set(np.unique(table.x[:, 1])) <= {0.0, 1.0, 2.0, 3.0}


def test_read_table_default_label_is_last(tmp_path):
    path = write_numeric_csv(tmp_path / "num.csv")
    table = read_table(path)
    assert table.label_column == "target"
    assert table.feature_names == ["f0", "f1", "f2"]


# --- forest export ---------------------------------------------------------------


def test_single_tree_parity(tmp_path):
    path = write_numeric_csv(tmp_path / "num.csv")
    table = read_table(path)
    y = table.y_for(["0", "1"])
    model = DecisionTreeClassifier(random_state=0).fit(table.x, y)
    out = tmp_path / "tree.json"
    manifest = export_decision_forest(model, out, table)
    assert manifest.n_trees == 1
    ens = load_ensemble(out)
    probe = probe_rows(table)
    ours = ens.predict_all(probe)
    theirs = model.predict(probe)
    assert (ours == theirs).all()


def test_forest_cardinality_and_parity(tmp_path):
    path = write_numeric_csv(tmp_path / "num.csv")
    table = read_table(path)
    y = table.y_for(["0", "1"])
    model = RandomForestClassifier(n_estimators=200, random_state=0).fit(table.x, y)
    out = tmp_path / "forest.json"
    manifest = export_decision_forest(model, out, table)
    assert manifest.n_trees == 200
    doc = json.loads(out.read_text())
    assert len(doc["trees"]) == 200
    ens = load_ensemble(out)
    probe = probe_rows(table)
    assert (ens.predict_all(probe) == model.predict(probe)).all()


def test_unfitted_model_rejected(tmp_path):
    path = write_numeric_csv(tmp_path / "num.csv")
    table = read_table(path)
    with pytest.raises(ExportError, match="not a fitted"):
        export_decision_forest(RandomForestClassifier(), tmp_path / "x.json", table)


def test_forest_rejects_categorical_table(tmp_path):
    path = write_mixed_csv(tmp_path / "mixed.csv")
    table = read_table(path)
    y = table.y_for(["0", "1"])
    model = DecisionTreeClassifier(random_state=0).fit(table.x, y)
    with pytest.raises(ExportError, match="numeric features"):
        export_decision_forest(model, tmp_path / "x.json", table)


def test_manifest_feature_order_and_checksum(tmp_path):
    path = write_numeric_csv(tmp_path / "num.csv")
    table = read_table(path)
    model = DecisionTreeClassifier(random_state=0).fit(table.x, table.y_for(["0", "1"]))
    out = tmp_path / "tree.json"
    manifest = export_decision_forest(model, out, table)
    assert manifest.feature_names == ["f0", "f1", "f2"]
    import hashlib

    assert manifest.checksum == hashlib.sha256(out.read_bytes()).hexdigest()


def test_export_byte_stable_and_consumer_round_trip(tmp_path):
    path = write_numeric_csv(tmp_path / "num.csv")
    table = read_table(path)
    model = RandomForestClassifier(n_estimators=5, random_state=1).fit(table.x, table.y_for(["0", "1"]))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    export_decision_forest(model, a, table)
    export_decision_forest(model, b, table)
    assert a.read_bytes() == b.read_bytes()
    # loading and re-saving through the consumer reproduces the bytes exactly
    ens = load_ensemble(a)
    c = tmp_path / "c.json"
    save_ensemble(ens, c)
    assert c.read_bytes() == a.read_bytes()


# --- boosted export ----------------------------------------------------------------


def fit_booster(table, **kw):
    y = table.y_for(["0", "1"])
    params = dict(max_iter=20, max_depth=3, random_state=0)
    params.update(kw)
    cats = table.categorical_indices
    if cats:
        params["categorical_features"] = cats
    return HistGradientBoostingClassifier(**params).fit(table.x, y)


def test_boosted_probability_parity(tmp_path):
    path = write_mixed_csv(tmp_path / "mixed.csv")
    table = read_table(path)
    model = fit_booster(table)
    out = tmp_path / "boost.json"
    manifest = export_boosted(model, out, table)
    assert manifest.model_kind == "boosted"
    ens = load_ensemble(out)
    probe = probe_rows(table)
    theirs = model.predict_proba(probe)[:, 1]
    ours = np.array([ens.predict_proba(row) for row in probe])
    assert np.max(np.abs(ours - theirs)) < 1e-9
    assert (ens.predict_all(probe) == model.predict(probe)).all()


def test_boosted_categorical_split_emitted(tmp_path):
    path = write_mixed_csv(tmp_path / "mixed.csv")
    table = read_table(path)
    model = fit_booster(table)
    out = tmp_path / "boost.json"
    export_boosted(model, out, table)
    doc = json.loads(out.read_text())
    in_nodes = [n for t in doc["trees"] for n in t["nodes"] if not n["leaf"] and n["op"] == "in"]
    assert in_nodes, "no categorical split exported"
    vocab = len(table.categories[1])
    for node in in_nodes:
        assert node["feature"] == 1  # original column order is preserved
        assert node["values"] == sorted(node["values"])
        assert all(0 <= v < vocab for v in node["values"])
    # leaves carry both reconstructed counts and the raw score
    leaf = next(n for t in doc["trees"] for n in t["nodes"] if n["leaf"])
    assert "counts" in leaf and "value" in leaf


def test_boosted_rejects_multiclass(tmp_path):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(90, 2))
    y = rng.integers(0, 3, 90)
    model = HistGradientBoostingClassifier(max_iter=5, random_state=0).fit(x, y)
    path = write_numeric_csv(tmp_path / "num.csv")
    table = read_table(path)
    with pytest.raises(ExportError, match="binary"):
        export_boosted(model, tmp_path / "x.json", table)


def test_best_iteration_truncation_rule():
    assert n_trees_to_export(100, None) == 100
    assert n_trees_to_export(100, 40) == 40
    assert n_trees_to_export(30, 40) == 30
    with pytest.raises(ExportError):
        n_trees_to_export(10, 0)


def test_boosted_respects_best_iteration_attribute(tmp_path):
    path = write_numeric_csv(tmp_path / "num.csv")
    table = read_table(path)
    model = fit_booster(table, max_iter=12)

    class Truncated:
        """Booster-style handle that reports a best iteration."""

        best_iteration = 5

        def __init__(self, inner):
            self._inner = inner

        def __getattr__(self, name):
            return getattr(self._inner, name)

    out = tmp_path / "boost.json"
    manifest = export_boosted(Truncated(model), out, table)
    assert manifest.n_trees == 5
    assert len(json.loads(out.read_text())["trees"]) == 5


# --- CLI ------------------------------------------------------------------------------


def test_cli_export_forest(tmp_path, capsys):
    path = write_numeric_csv(tmp_path / "num.csv")
    table = read_table(path)
    model = RandomForestClassifier(n_estimators=8, random_state=2).fit(table.x, table.y_for(["0", "1"]))
    pkl = tmp_path / "model.pkl"
    pkl.write_bytes(pickle.dumps(model))
    out = tmp_path / "model.json"
    manifest_path = tmp_path / "manifest.json"
    code = main(["export", "--model", str(pkl), "--kind", "forest", "--data", str(path),
                 "--out", str(out), "--manifest", str(manifest_path)])
    assert code == 0
    ens = load_ensemble(out)
    assert ens.n_trees == 8
    manifest = json.loads(manifest_path.read_text())
    assert manifest["model_kind"] == "forest" and manifest["n_trees"] == 8


def test_cli_error_is_parseable(tmp_path, capsys):
    path = write_numeric_csv(tmp_path / "num.csv")
    code = main(["export", "--model", "missing.pkl", "--kind", "forest",
                 "--data", str(path), "--out", str(tmp_path / "x.json")])
    assert code == 1
    assert capsys.readouterr().err.startswith("error: ")


# --- acceptance: exporter parity ------------------------------------------------------


def test_acceptance_exporter_parity(tmp_path):
    """Forest and booster exports predict identically to their sources on
    50-row probe sets (class-exact; boosted probabilities within 1e-9)."""
    started = time.monotonic()

    num_csv = write_numeric_csv(tmp_path / "num.csv", n=150, seed=5)
    num_table = read_table(num_csv)
    y = num_table.y_for(["0", "1"])
    forest = RandomForestClassifier(n_estimators=60, random_state=4).fit(num_table.x, y)
    forest_out = tmp_path / "forest.json"
    export_decision_forest(forest, forest_out, num_table)
    forest_ens = load_ensemble(forest_out)
    probe = probe_rows(num_table, k=50, seed=2)
    assert len(probe) == 50
    assert (forest_ens.predict_all(probe) == forest.predict(probe)).all()

    mixed_csv = write_mixed_csv(tmp_path / "mixed.csv", n=220, seed=6)
    mixed_table = read_table(mixed_csv)
    booster = fit_booster(mixed_table, max_iter=30)
    boost_out = tmp_path / "boost.json"
    export_boosted(booster, boost_out, mixed_table)
    boost_ens = load_ensemble(boost_out)
    probe = probe_rows(mixed_table, k=50, seed=3)
    theirs = booster.predict_proba(probe)[:, 1]
    ours = np.array([boost_ens.predict_proba(row) for row in probe])
    assert np.max(np.abs(ours - theirs)) < 1e-9
    assert (boost_ens.predict_all(probe) == booster.predict(probe)).all()

    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"exporter parity took {elapsed:.1f}s"
    print("ACCEPTANCE exporter-parity: PASS")
