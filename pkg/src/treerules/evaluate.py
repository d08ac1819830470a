"""Scoring: naive rule-based classification, performance ratios, fidelity,
local precision/coverage, and the cross-validation harness."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, stratified_kfold
from .ensemble import Ensemble, train_decision_tree, train_gbdt, train_random_forest
from .explain import GlobalExplanation, LocalExplanation
from .rules import LEAF_ONLY, ConditionTable, Rule, RuleMetrics, extract_rules
from .selection import SelectionConfig, solve

ORDER_PRECISION = "precision"
ORDER_GIVEN = "given"

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")

TRAINERS = {
    "tree": train_decision_tree,
    "forest": train_random_forest,
    "gbdt": train_gbdt,
}


@dataclass
class RuleBasedClassifier:
    """Ordered rule list with a training-majority fallback.

    The first rule whose body fully covers an instance decides; instances
    matching no rule get the default label, so prediction is total.
    """

    rules: list[tuple[Rule, RuleMetrics]]
    conditions: ConditionTable
    default_label: int

    @classmethod
    def from_rules(cls, rules, conditions, default_label, order: str = ORDER_PRECISION):
        if order == ORDER_PRECISION:
            rules = sorted(rules, key=lambda rm: (-rm[1].precision, rm[0].id))
        elif order != ORDER_GIVEN:
            raise ValueError(f"unknown rule order {order!r}")
        return cls(list(rules), conditions, default_label)

    @classmethod
    def from_explanation(cls, expl: GlobalExplanation | LocalExplanation, default_label,
                         order: str = ORDER_PRECISION):
        return cls.from_rules(expl.rules, expl.conditions, default_label, order)

    def classify(self, row) -> int:
        for rule, _ in self.rules:
            if all(self.conditions.get(cid).holds(row) for cid in rule.body):
                return rule.predicted_class
        return self.default_label

    def classify_all(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        preds = np.full(x.shape[0], self.default_label, dtype=np.int64)
        if not self.rules:
            return preds
        masks = self.conditions.mask_matrix(x)
        unassigned = np.ones(x.shape[0], dtype=bool)
        for rule, _ in self.rules:
            cover = masks[[cid - 1 for cid in rule.body]].all(axis=0)
            take = cover & unassigned
            preds[take] = rule.predicted_class
            unassigned &= ~take
        return preds


def binary_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> dict[str, float]:
    """Raw accuracy/precision/recall/f1 with class 1 as positive."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("metrics need at least one row")
    tp = int(np.count_nonzero((y_pred == 1) & (y_true == 1)))
    fp = int(np.count_nonzero((y_pred == 1) & (y_true != 1)))
    fn = int(np.count_nonzero((y_pred != 1) & (y_true == 1)))
    tn = y_true.size - tp - fp - fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": (tp + tn) / y_true.size,
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


def performance(clf: RuleBasedClassifier, data: Dataset) -> dict[str, float]:
    if data.n == 0:
        raise ValueError("performance needs a nonempty dataset")
    return binary_metrics(data.y, clf.classify_all(data.x))


def performance_ratio(clf: RuleBasedClassifier, ens: Ensemble, data: Dataset) -> dict:
    """Per-metric ruleset/model quotient; None where the model metric is 0."""
    ours = performance(clf, data)
    model = binary_metrics(data.y, ens.predict_all(data.x))
    return {
        name: (ours[name] / model[name] if model[name] != 0 else None)
        for name in METRIC_NAMES
    }


def fidelity(clf: RuleBasedClassifier, ens: Ensemble, data: Dataset) -> dict[str, float]:
    """Agreement metrics, treating the ensemble's predictions as truth."""
    model_pred = ens.predict_all(data.x)
    return binary_metrics(model_pred, clf.classify_all(data.x))


def _explanation_cover(expl: LocalExplanation, x: np.ndarray) -> np.ndarray:
    masks = expl.conditions.mask_matrix(x)
    covered = np.zeros(x.shape[0], dtype=bool)
    for rule, _ in expl.rules:
        covered |= masks[[cid - 1 for cid in rule.body]].all(axis=0)
    return covered


def local_precision(expl: LocalExplanation, ens: Ensemble, validation: Dataset):
    """Among covered validation rows, the share the model maps to the
    explained prediction; None when nothing is covered."""
    covered = _explanation_cover(expl, validation.x)
    if not covered.any():
        return None
    preds = ens.predict_all(validation.x[covered])
    return float(np.mean(preds == expl.model_prediction))


def local_coverage(expl: LocalExplanation, validation: Dataset) -> float:
    if validation.n == 0:
        raise ValueError("coverage needs a nonempty validation set")
    covered = _explanation_cover(expl, validation.x)
    return float(np.count_nonzero(covered)) / validation.n


# ---------------------------------------------------------------------------
# Cross-validation harness


@dataclass
class FoldReport:
    fold: int
    ruleset: dict[str, float]
    model: dict[str, float]
    ratio: dict[str, float | None]
    fidelity: dict[str, float]
    n_rules: int
    total_conditions: int
    extract_seconds: float
    solve_seconds: float
    solver_status: str


@dataclass
class EvalReport:
    folds: list[FoldReport] = field(default_factory=list)

    def _mean(self, values):
        defined = [v for v in values if v is not None]
        return float(np.mean(defined)) if defined else None

    def mean_block(self, attr: str) -> dict:
        keys = getattr(self.folds[0], attr).keys()
        return {k: self._mean([getattr(f, attr)[k] for f in self.folds]) for k in keys}

    def summary(self) -> dict:
        return {
            "folds": len(self.folds),
            "ruleset": self.mean_block("ruleset"),
            "model": self.mean_block("model"),
            "ratio": self.mean_block("ratio"),
            "fidelity": self.mean_block("fidelity"),
            "n_rules": self._mean([f.n_rules for f in self.folds]),
            "total_conditions": self._mean([f.total_conditions for f in self.folds]),
            "extract_seconds": self._mean([f.extract_seconds for f in self.folds]),
            "solve_seconds": self._mean([f.solve_seconds for f in self.folds]),
        }


def evaluate_split(ens: Ensemble, train: Dataset, validation: Dataset,
                   cfg: SelectionConfig | None = None, mode: str = LEAF_ONLY,
                   fold: int = 0, order: str = ORDER_PRECISION,
                   budget: float | None = None) -> FoldReport:
    """Extract on the training split, solve, and score on the validation split."""
    cfg = cfg if cfg is not None else SelectionConfig()
    t0 = time.monotonic()
    crs = extract_rules(ens, train, mode)
    t1 = time.monotonic()
    sol = solve(crs, cfg, budget)
    t2 = time.monotonic()
    selected = [crs.rule_by_id(rid) for rid in sol.selected]
    clf = RuleBasedClassifier.from_rules(selected, crs.conditions, train.majority_class(), order)
    ruleset = performance(clf, validation)
    model = binary_metrics(validation.y, ens.predict_all(validation.x))
    ratio = {k: (ruleset[k] / model[k] if model[k] != 0 else None) for k in METRIC_NAMES}
    fid = fidelity(clf, ens, validation)
    return FoldReport(
        fold=fold,
        ruleset=ruleset,
        model=model,
        ratio=ratio,
        fidelity=fid,
        n_rules=len(selected),
        total_conditions=sum(m.size for _, m in selected),
        extract_seconds=t1 - t0,
        solve_seconds=t2 - t1,
        solver_status=sol.status,
    )


def run_crossval(data: Dataset, trainer: str = "forest", trainer_params: dict | None = None,
                 cfg: SelectionConfig | None = None, k: int = 5, seed: int = 0,
                 mode: str = LEAF_ONLY, order: str = ORDER_PRECISION,
                 budget: float | None = None) -> EvalReport:
    """k-fold pipeline: train, extract, solve, and score each fold."""
    if trainer not in TRAINERS:
        raise ValueError(f"unknown trainer {trainer!r} (expected one of {sorted(TRAINERS)})")
    params = dict(trainer_params or {})
    params.setdefault("seed", seed)
    plan = stratified_kfold(data, k, seed)
    report = EvalReport()
    for fold in range(k):
        train = data.subset(plan.train_indices(fold))
        validation = data.subset(plan.test_indices(fold))
        ens = TRAINERS[trainer](train, **params)
        report.folds.append(
            evaluate_split(ens, train, validation, cfg, mode, fold=fold, order=order, budget=budget)
        )
    return report


# ---------------------------------------------------------------------------
# Report rendering


def eval_report_to_doc(report: EvalReport) -> dict:
    return {
        "summary": report.summary(),
        "folds": [
            {
                "fold": f.fold,
                "ruleset": f.ruleset,
                "model": f.model,
                "ratio": f.ratio,
                "fidelity": f.fidelity,
                "n_rules": f.n_rules,
                "total_conditions": f.total_conditions,
                "extract_seconds": f.extract_seconds,
                "solve_seconds": f.solve_seconds,
                "solver_status": f.solver_status,
            }
            for f in report.folds
        ],
    }


def _fmt(value):
    return "null" if value is None else f"{value:.4f}"


def format_eval_report(report: EvalReport) -> str:
    s = report.summary()
    lines = [
        f"folds: {s['folds']}   rules/fold: {s['n_rules']:.1f}   "
        f"conditions/fold: {s['total_conditions']:.1f}",
        f"time: extract {s['extract_seconds']:.3f}s   solve {s['solve_seconds']:.3f}s",
        "",
        f"{'metric':<12}{'ruleset':>10}{'model':>10}{'ratio':>10}{'fidelity':>10}",
    ]
    for name in METRIC_NAMES:
        lines.append(
            f"{name:<12}{_fmt(s['ruleset'][name]):>10}{_fmt(s['model'][name]):>10}"
            f"{_fmt(s['ratio'][name]):>10}{_fmt(s['fidelity'][name]):>10}"
        )
    return "\n".join(lines) + "\n"
