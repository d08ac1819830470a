import itertools

import numpy as np
import pytest

from treerules.dataset import Column, Dataset, Schema
from treerules.ensemble import LE, SplitCondition, train_decision_tree, train_random_forest
from treerules.evaluate import (
    ORDER_GIVEN,
    EvalReport,
    RuleBasedClassifier,
    binary_metrics,
    eval_report_to_doc,
    evaluate_split,
    fidelity,
    format_eval_report,
    local_coverage,
    local_precision,
    performance,
    performance_ratio,
    run_crossval,
)
from treerules.explain import explain_local
from treerules.rules import ConditionTable, LEAF_ONLY, Rule, RuleMetrics, extract_rules
from treerules.selection import SelectionConfig


def metrics(precision=50, size=1):
    return RuleMetrics(size=size, support=50, accuracy=50, error_rate=50,
                       precision=precision, recall=50, f1=50, confusion=(0, 0, 0, 0))


def simple_schema():
    return Schema([Column("a", "continuous"), Column("b", "continuous")], "y", ["n", "p"])


def make_data(n=120, seed=2):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    y = ((x[:, 0] - 0.3 * x[:, 1]) > 0).astype(int)
    return Dataset(simple_schema(), x, y)


def clf_with(rules, default=0, order=ORDER_GIVEN):
    conds = ConditionTable([SplitCondition(0, LE, threshold=0.0), SplitCondition(1, LE, threshold=0.0)])
    return RuleBasedClassifier.from_rules(rules, conds, default, order)


# --- classify -------------------------------------------------------------------


def test_no_match_returns_default():
    rule = Rule(1, frozenset([1]), 1, (0, 0))  # a <= 0.0
    clf = clf_with([(rule, metrics())], default=0)
    assert clf.classify(np.array([5.0, 0.0])) == 0
    assert clf.classify(np.array([-5.0, 0.0])) == 1


def test_sequential_order_decides():
    first = Rule(1, frozenset([1]), 1, (0, 0))   # a <= 0
    second = Rule(3, frozenset([1, 2]), 0, (0, 1))  # a <= 0 and b <= 0 (overlaps)
    clf = clf_with([(first, metrics()), (second, metrics())], default=0, order=ORDER_GIVEN)
    assert clf.classify(np.array([-1.0, -1.0])) == 1  # first rule wins
    swapped = clf_with([(second, metrics()), (first, metrics())], default=0, order=ORDER_GIVEN)
    assert swapped.classify(np.array([-1.0, -1.0])) == 0


def test_precision_order_sorts_rules():
    low = Rule(1, frozenset([1]), 1, (0, 0))
    high = Rule(2, frozenset([1, 2]), 0, (0, 1))
    clf = clf_with([(low, metrics(precision=10)), (high, metrics(precision=90))], order="precision")
    assert clf.rules[0][0].id == 2


def test_empty_rule_list_is_default_everywhere():
    clf = clf_with([], default=1)
    x = np.random.default_rng(0).normal(size=(17, 2))
    assert (clf.classify_all(x) == 1).all()


def test_classify_all_matches_classify():
    data = make_data()
    ens = train_decision_tree(data, max_depth=3)
    crs = extract_rules(ens, data, LEAF_ONLY)
    clf = RuleBasedClassifier.from_rules(crs.rules, crs.conditions, 0)
    batch = clf.classify_all(data.x)
    assert batch.tolist() == [clf.classify(row) for row in data.x]


# --- performance -----------------------------------------------------------------


def test_perfect_classifier_metrics():
    data = make_data()
    ens = train_decision_tree(data, max_depth=6)
    crs = extract_rules(ens, data, LEAF_ONLY)
    clf = RuleBasedClassifier.from_rules(crs.rules, crs.conditions, data.majority_class())
    if (ens.predict_all(data.x) == data.y).all():
        got = performance(clf, data)
        assert got == {"accuracy": 1.0, "precision": 1.0, "recall": 1.0, "f1": 1.0}


def test_all_negative_on_balanced_data():
    x = np.zeros((10, 2))
    y = np.array([0, 1] * 5)
    data = Dataset(simple_schema(), x, y)
    clf = clf_with([], default=0)
    got = performance(clf, data)
    assert got["accuracy"] == 0.5 and got["recall"] == 0.0 and got["f1"] == 0.0


def test_metrics_match_bruteforce_counts():
    rng = np.random.default_rng(31)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        y_true = rng.integers(0, 2, n)
        y_pred = rng.integers(0, 2, n)
        got = binary_metrics(y_true, y_pred)
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == 1 and p == 1)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t == 0 and p == 1)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == 1 and p == 0)
        tn = n - tp - fp - fn
        assert got["accuracy"] == pytest.approx((tp + tn) / n)
        assert got["precision"] == pytest.approx(tp / (tp + fp) if tp + fp else 0.0)
        assert got["recall"] == pytest.approx(tp / (tp + fn) if tp + fn else 0.0)
        pr = got["precision"] + got["recall"]
        assert got["f1"] == pytest.approx(2 * got["precision"] * got["recall"] / pr if pr else 0.0)


def test_performance_ratio_identity_and_null():
    data = make_data()
    ens = train_decision_tree(data, max_depth=6)
    crs = extract_rules(ens, data, LEAF_ONLY)
    clf = RuleBasedClassifier.from_rules(crs.rules, crs.conditions, 0)
    ratios = performance_ratio(clf, ens, data)
    for name, value in ratios.items():
        assert value == pytest.approx(1.0)  # leaf rules reproduce the tree
    # a model that never predicts positive has recall 0 -> null ratio
    x = np.full((6, 2), 5.0)
    y = np.array([0, 1, 0, 1, 0, 1])
    flat = Dataset(simple_schema(), x, y)
    stump = train_decision_tree(flat, max_depth=2)  # identical rows -> stump
    pred = stump.predict_all(flat.x)
    assert (pred == pred[0]).all()
    ratios = performance_ratio(clf_with([], default=0), stump, flat)
    if pred[0] == 0:
        assert ratios["recall"] is None


# --- fidelity --------------------------------------------------------------------


def test_fidelity_of_leaf_rules_is_one_on_grid():
    # exhaustive domain: every combination of two small integer features
    grid = np.array(list(itertools.product(range(5), range(5))), dtype=float)
    rng = np.random.default_rng(8)
    y = rng.integers(0, 2, len(grid))
    data = Dataset(simple_schema(), grid, y)
    ens = train_decision_tree(data, max_depth=4)
    crs = extract_rules(ens, data, LEAF_ONLY)
    for order in ("given", "precision"):
        clf = RuleBasedClassifier.from_rules(crs.rules, crs.conditions, 0, order)
        fid = fidelity(clf, ens, data)
        assert fid["accuracy"] == 1.0


def test_fidelity_of_constant_classifier():
    data = make_data()
    ens = train_decision_tree(data, max_depth=4)
    model_pred = ens.predict_all(data.x)
    clf = clf_with([], default=1)
    fid = fidelity(clf, ens, data)
    assert fid["accuracy"] == pytest.approx(float(np.mean(model_pred == 1)))


def test_fidelity_perfect_match():
    data = make_data()
    ens = train_decision_tree(data, max_depth=5)
    crs = extract_rules(ens, data, LEAF_ONLY)
    clf = RuleBasedClassifier.from_rules(crs.rules, crs.conditions, 0)
    assert fidelity(clf, ens, data)["accuracy"] == 1.0


# --- local metrics ----------------------------------------------------------------


def test_local_precision_single_tree_is_one():
    data = make_data()
    ens = train_decision_tree(data, max_depth=4)
    for i in (0, 11, 23):
        expl = explain_local(ens, data, data.x[i])
        assert local_precision(expl, ens, data) == 1.0


def test_local_precision_none_when_uncovered():
    data = make_data()
    ens = train_decision_tree(data, max_depth=4)
    expl = explain_local(ens, data, data.x[0])
    # validation set far away from every training row on purpose
    far = Dataset(simple_schema(), np.full((5, 2), 1e9), np.zeros(5, dtype=int))
    if local_coverage(expl, far) == 0.0:
        assert local_precision(expl, ens, far) is None


def test_local_coverage_bounds_and_bruteforce():
    data = make_data()
    ens = train_random_forest(data, n_trees=10, max_depth=3, seed=4)
    expl = explain_local(ens, data, data.x[0])
    cov = local_coverage(expl, data)
    assert 0.0 < cov <= 1.0
    covered = 0
    for row in data.x:
        hit = any(
            all(expl.conditions.get(cid).holds(row) for cid in rule.body)
            for rule, _ in expl.rules
        )
        covered += hit
    assert cov == pytest.approx(covered / data.n)


def test_tautological_rule_covers_everything():
    data = make_data()
    cond = SplitCondition(0, LE, threshold=float(data.x[:, 0].max() + 1))
    table = ConditionTable([cond])
    rule = Rule(1, frozenset([1]), 1, (0, 0))
    from treerules.explain import LocalExplanation
    from treerules.selection import RuleSetSolution, SolverStats

    expl = LocalExplanation(
        instance=data.x[0], model_prediction=1, rules=[(rule, metrics())],
        conditions=table, solver=RuleSetSolution([1], (), "optimal", SolverStats()),
        config=SelectionConfig(), model_fingerprint="x",
    )
    assert local_coverage(expl, data) == 1.0


# --- cross-validation ---------------------------------------------------------------


def test_crossval_shapes_and_determinism():
    data = make_data(150)
    report = run_crossval(data, trainer="tree", trainer_params={"max_depth": 3},
                          cfg=SelectionConfig(), k=5, seed=3)
    assert len(report.folds) == 5
    again = run_crossval(data, trainer="tree", trainer_params={"max_depth": 3},
                         cfg=SelectionConfig(), k=5, seed=3)
    assert eval_report_to_doc(report)["summary"]["ratio"] == eval_report_to_doc(again)["summary"]["ratio"]
    assert [f.ruleset for f in report.folds] == [f.ruleset for f in again.folds]


def test_crossval_mean_matches_external_recompute():
    data = make_data(150)
    report = run_crossval(data, trainer="tree", trainer_params={"max_depth": 3}, k=5, seed=9)
    summary = report.summary()
    for name in ("accuracy", "f1"):
        values = [f.ruleset[name] for f in report.folds]
        assert summary["ruleset"][name] == pytest.approx(sum(values) / len(values))


def test_crossval_rejects_unknown_trainer():
    with pytest.raises(ValueError, match="unknown trainer"):
        run_crossval(make_data(), trainer="boosting-machine")


def test_report_rendering():
    data = make_data(150)
    report = run_crossval(data, trainer="forest",
                          trainer_params={"n_trees": 5, "max_depth": 3}, k=3, seed=1)
    text = format_eval_report(report)
    assert "ratio" in text and "accuracy" in text
    doc = eval_report_to_doc(report)
    assert doc["summary"]["folds"] == 3 and len(doc["folds"]) == 3


def test_evaluate_split_times_phases():
    data = make_data(150)
    ens = train_decision_tree(data, max_depth=3)
    fold = evaluate_split(ens, data, data)
    assert fold.extract_seconds >= 0.0 and fold.solve_seconds >= 0.0
    assert fold.n_rules >= 1 and fold.solver_status == "optimal"
