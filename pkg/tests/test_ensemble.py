import json

import numpy as np
import pytest

from treerules.dataset import Column, Dataset, Schema
from treerules.ensemble import (
    GT,
    IN,
    LE,
    NOT_IN,
    SCORE_SUM,
    VOTE,
    Ensemble,
    ModelFormatError,
    Node,
    SchemaMismatchError,
    SplitCondition,
    Tree,
    ensemble_to_doc,
    load_ensemble,
    logistic_loss,
    save_ensemble,
    train_decision_tree,
    train_gbdt,
    train_random_forest,
)


def two_class_schema(names=("x0", "x1"), kinds=("continuous", "continuous")):
    cols = [Column(n, k) for n, k in zip(names, kinds)]
    return Schema(cols, "y", ["neg", "pos"])


def leaf(nid, counts, value=None):
    return Node(nid, class_counts=np.asarray(counts, dtype=np.int64), value=value)


def internal(nid, cond, left, right):
    return Node(nid, condition=cond, left=left, right=right)


def stump_tree(counts, value=None):
    return Tree({0: leaf(0, counts, value)}, root=0)


def one_split_tree(threshold=0.5, left_counts=(5, 0), right_counts=(0, 5), values=None):
    cond = SplitCondition(0, LE, threshold=threshold)
    return Tree({0: internal(0, cond, 1, 2), 1: leaf(1, left_counts), 2: leaf(2, right_counts)}, root=0)


def vote_ensemble(trees, features=None):
    features = features or [Column("x0", "continuous"), Column("x1", "continuous")]
    return Ensemble(trees, VOTE, ["neg", "pos"], features)


# --- conditions -------------------------------------------------------------


@pytest.mark.parametrize(
    "cond",
    [
        SplitCondition(0, LE, threshold=0.5),
        SplitCondition(1, GT, threshold=-3.25),
        SplitCondition(2, IN, values=frozenset({1, 4})),
        SplitCondition(2, NOT_IN, values=frozenset({0})),
    ],
)
def test_negation_is_involutive(cond):
    assert cond.negate().negate() == cond
    assert cond.negate() != cond


def test_negation_maps_ops():
    assert SplitCondition(0, LE, threshold=1.0).negate().op == GT
    assert SplitCondition(0, IN, values=frozenset({2})).negate().op == NOT_IN


def test_condition_validation():
    with pytest.raises(ValueError):
        SplitCondition(0, LE)
    with pytest.raises(ValueError):
        SplitCondition(0, IN, values=frozenset())
    with pytest.raises(ValueError):
        SplitCondition(0, "between", threshold=1.0)


def test_boundary_value_routes_left():
    tree = one_split_tree(threshold=2.0)
    assert tree.route(np.array([2.0, 9.9])) == 1
    assert tree.route(np.array([2.0000001, 9.9])) == 2


# --- hand-built ensembles ---------------------------------------------------


def test_majority_vote_three_trees():
    trees = [stump_tree([9, 1]), stump_tree([1, 9]), stump_tree([2, 8])]
    ens = vote_ensemble(trees)
    assert ens.predict(np.array([0.0, 0.0])) == 1


def test_vote_tie_goes_to_lowest_class():
    ens = vote_ensemble([stump_tree([9, 1]), stump_tree([1, 9])])
    assert ens.predict(np.array([0.0, 0.0])) == 0


def test_single_tree_vote_is_leaf_argmax():
    ens = vote_ensemble([one_split_tree(left_counts=[3, 7], right_counts=[8, 2])])
    assert ens.predict(np.array([0.0, 0.0])) == 1
    assert ens.predict(np.array([1.0, 0.0])) == 0


def test_score_sum_boundary_is_positive():
    tree = stump_tree([1, 1], value=0.0)
    ens = Ensemble([tree], SCORE_SUM, ["neg", "pos"],
                   [Column("x0", "continuous"), Column("x1", "continuous")], base_score=0.0)
    assert ens.predict(np.array([0.0, 0.0])) == 1
    assert ens.predict_proba(np.array([0.0, 0.0])) == 0.5


def test_active_leaves_one_per_tree():
    trees = [stump_tree([1, 0]), one_split_tree(), stump_tree([0, 1])]
    ens = vote_ensemble(trees)
    active = ens.active_leaves(np.array([0.2, 0.0]))
    assert len(active) == 3
    assert active[0] == (0, 0)
    assert active[1] == (1, 1)


def test_predict_all_matches_predict():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 2))
    ens = vote_ensemble([one_split_tree(), one_split_tree(threshold=-0.3, left_counts=(1, 3), right_counts=(4, 1))])
    batch = ens.predict_all(x)
    single = [ens.predict(row) for row in x]
    assert batch.tolist() == single


def test_schema_row_width_checked():
    ens = vote_ensemble([stump_tree([1, 0])])
    with pytest.raises(SchemaMismatchError):
        ens.predict(np.array([1.0]))


# --- training ---------------------------------------------------------------


def separable_data(n=20):
    schema = two_class_schema()
    x = np.zeros((n, 2))
    x[:, 0] = np.linspace(0.0, 1.0, n)
    y = (x[:, 0] > 0.5).astype(int)
    return Dataset(schema, x, y)


def test_tree_on_separable_data_is_single_split():
    data = separable_data()
    ens = train_decision_tree(data, max_depth=1)
    tree = ens.trees[0]
    assert tree.node_count == 3 and tree.leaf_count == 2
    root = tree.nodes[tree.root]
    assert root.condition.op == LE and root.condition.feature == 0
    left, right = tree.nodes[root.left], tree.nodes[root.right]
    assert min(left.class_counts) == 0 and min(right.class_counts) == 0
    assert (ens.predict_all(data.x) == data.y).all()


def test_training_needs_two_rows():
    schema = two_class_schema()
    data = Dataset(schema, np.zeros((1, 2)), np.array([0]))
    with pytest.raises(ValueError, match="two rows"):
        train_decision_tree(data)


def test_all_labels_identical_gives_root_leaf():
    schema = two_class_schema()
    data = Dataset(schema, np.random.default_rng(1).normal(size=(10, 2)), np.zeros(10, dtype=int))
    ens = train_decision_tree(data)
    assert ens.trees[0].is_stump and ens.is_stump


def test_identical_feature_rows_give_stump():
    schema = two_class_schema()
    data = Dataset(schema, np.ones((10, 2)), np.array([0, 1] * 5))
    ens = train_decision_tree(data)
    assert ens.trees[0].is_stump


def test_training_determinism():
    data = separable_data(50)
    a = train_decision_tree(data, max_depth=3, seed=5)
    b = train_decision_tree(data, max_depth=3, seed=5)
    assert ensemble_to_doc(a) == ensemble_to_doc(b)


def test_depth_respected_and_min_leaf():
    rng = np.random.default_rng(42)
    schema = two_class_schema()
    x = rng.normal(size=(200, 2))
    y = ((x[:, 0] + x[:, 1]) > 0).astype(int)
    data = Dataset(schema, x, y)
    ens = train_decision_tree(data, max_depth=4, min_leaf=5)
    tree = ens.trees[0]
    assert tree.depth <= 4
    for node in tree.nodes.values():
        if node.is_leaf:
            assert node.class_counts.sum() >= 5


def test_categorical_split_training():
    cols = [Column("color", "categorical", ["red", "green", "blue"])]
    schema = Schema(cols, "y", ["no", "yes"])
    x = np.array([[0], [1], [2], [0], [1], [2], [0], [1]], dtype=float)
    y = np.array([1, 0, 1, 1, 0, 1, 1, 0])
    data = Dataset(schema, x, y)
    ens = train_decision_tree(data, max_depth=1)
    cond = ens.trees[0].nodes[0].condition
    assert cond.op == IN
    assert cond.values == frozenset({1})  # green isolates class 0
    assert (ens.predict_all(x) == y).all()


def test_forest_size_and_determinism():
    data = separable_data(60)
    ens = train_random_forest(data, n_trees=12, max_depth=3, seed=9)
    assert ens.n_trees == 12 and ens.aggregation == VOTE
    again = train_random_forest(data, n_trees=12, max_depth=3, seed=9)
    assert ensemble_to_doc(ens) == ensemble_to_doc(again)


def test_forest_breast_scale_two_hundred_trees():
    from pathlib import Path

    from treerules.dataset import infer_schema, load_csv

    csv = Path(__file__).parent / "data" / "breast.csv"
    data = load_csv(csv, infer_schema(csv, "class"))
    ens = train_random_forest(data, n_trees=200, max_depth=5, min_leaf=2,
                              feature_fraction=0.6, seed=1)
    assert ens.n_trees == 200


def test_forest_prefix_stability():
    # tree t depends only on (seed, t): training more trees keeps the prefix
    data = separable_data(60)
    small = train_random_forest(data, n_trees=3, max_depth=3, seed=4)
    big = train_random_forest(data, n_trees=6, max_depth=3, seed=4)
    assert ensemble_to_doc(big)["trees"][:3] == ensemble_to_doc(small)["trees"]


def test_forest_reduces_to_single_tree():
    data = separable_data(40)
    forest = train_random_forest(data, n_trees=1, max_depth=3, min_leaf=2,
                                 feature_fraction=1.0, seed=0, bootstrap=False)
    single = train_decision_tree(data, max_depth=3, min_leaf=2, seed=0)
    assert ensemble_to_doc(forest)["trees"] == ensemble_to_doc(single)["trees"]


def test_gbdt_round_validation():
    data = separable_data()
    with pytest.raises(ValueError):
        train_gbdt(data, n_rounds=0)


def test_gbdt_is_score_sum_and_fits():
    data = separable_data(40)
    ens = train_gbdt(data, n_rounds=10, max_depth=2, learning_rate=0.3)
    assert ens.aggregation == SCORE_SUM
    assert (ens.predict_all(data.x) == data.y).all()
    for tree in ens.trees:
        for node in tree.nodes.values():
            if node.is_leaf:
                assert node.value is not None and node.class_counts is not None


def test_gbdt_loss_nonincreasing():
    data = separable_data(40)
    ens = train_gbdt(data, n_rounds=8, max_depth=2, learning_rate=0.2)
    losses = []
    for r in range(1, ens.n_trees + 1):
        partial = Ensemble(ens.trees[:r], SCORE_SUM, ens.classes, ens.features, ens.base_score)
        losses.append(logistic_loss(partial, data))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_gbdt_binary_only():
    cols = [Column("x0", "continuous")]
    schema = Schema(cols, "y", ["a", "b", "c"])
    data = Dataset(schema, np.arange(6, dtype=float).reshape(-1, 1), np.array([0, 1, 2, 0, 1, 2]))
    with pytest.raises(ValueError, match="binary"):
        train_gbdt(data, n_rounds=2)


# --- interchange format -----------------------------------------------------


def test_save_load_round_trip(tmp_path):
    data = separable_data(60)
    ens = train_random_forest(data, n_trees=5, max_depth=3, seed=2)
    p = tmp_path / "model.json"
    save_ensemble(ens, p)
    again = load_ensemble(p)
    assert ensemble_to_doc(again) == ensemble_to_doc(ens)
    assert (again.predict_all(data.x) == ens.predict_all(data.x)).all()
    # byte stability
    q = tmp_path / "model2.json"
    save_ensemble(again, q)
    assert p.read_bytes() == q.read_bytes()


def test_gbdt_round_trip(tmp_path):
    data = separable_data(40)
    ens = train_gbdt(data, n_rounds=4, max_depth=2)
    p = tmp_path / "gbdt.json"
    save_ensemble(ens, p)
    again = load_ensemble(p)
    probe = np.array([[0.3, 0.0], [0.7, 0.0]])
    for row in probe:
        assert again.predict_proba(row) == pytest.approx(ens.predict_proba(row), abs=0)


def test_only_le_and_in_serialized(tmp_path):
    cols = [Column("color", "categorical", ["red", "green", "blue"]), Column("x", "continuous")]
    schema = Schema(cols, "y", ["no", "yes"])
    rng = np.random.default_rng(3)
    x = np.column_stack([rng.integers(0, 3, 80), rng.normal(size=80)]).astype(float)
    y = ((x[:, 0] == 1) | (x[:, 1] > 0.5)).astype(int)
    ens = train_decision_tree(Dataset(schema, x, y), max_depth=3)
    doc = ensemble_to_doc(ens)
    ops = {n["op"] for t in doc["trees"] for n in t["nodes"] if not n["leaf"]}
    assert ops <= {"le", "in"}


def test_load_rejects_dangling_child(tmp_path):
    doc = {
        "format_version": 1, "aggregation": "vote", "n_classes": 2, "base_score": 0.0,
        "classes": ["a", "b"],
        "features": [{"name": "x", "kind": "continuous"}],
        "trees": [{"nodes": [
            {"id": 0, "leaf": False, "feature": 0, "op": "le", "threshold": 1.0, "left": 1, "right": 99},
            {"id": 1, "leaf": True, "counts": [1, 0]},
        ], "root": 0}],
    }
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="dangling"):
        load_ensemble(p)


def test_load_rejects_unknown_aggregation(tmp_path):
    doc = {
        "format_version": 1, "aggregation": "averaging", "n_classes": 2, "base_score": 0.0,
        "classes": ["a", "b"], "features": [{"name": "x", "kind": "continuous"}],
        "trees": [{"nodes": [{"id": 0, "leaf": True, "counts": [1, 0]}], "root": 0}],
    }
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="aggregation"):
        load_ensemble(p)


def test_load_rejects_gt_op(tmp_path):
    doc = {
        "format_version": 1, "aggregation": "vote", "n_classes": 2, "base_score": 0.0,
        "classes": ["a", "b"], "features": [{"name": "x", "kind": "continuous"}],
        "trees": [{"nodes": [
            {"id": 0, "leaf": False, "feature": 0, "op": "gt", "threshold": 1.0, "left": 1, "right": 2},
            {"id": 1, "leaf": True, "counts": [1, 0]},
            {"id": 2, "leaf": True, "counts": [0, 1]},
        ], "root": 0}],
    }
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="not serializable"):
        load_ensemble(p)


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "junk.json"
    p.write_text("not json at all {")
    with pytest.raises(ModelFormatError, match="JSON"):
        load_ensemble(p)


def test_compatibility_accepts_extended_vocabulary():
    cols = [Column("color", "categorical", ["red", "green"])]
    ens = Ensemble([stump_tree([1, 0])], VOTE, ["no", "yes"], cols)
    extended = Schema([Column("color", "categorical", ["red", "green", "blue"])], "y", ["no", "yes"])
    ens.check_compatible(extended)  # no raise
    reordered = Schema([Column("color", "categorical", ["green", "red"])], "y", ["no", "yes"])
    with pytest.raises(SchemaMismatchError):
        ens.check_compatible(reordered)
