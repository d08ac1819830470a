"""Decompose an ensemble into candidate rules and score them on a dataset.

Every root-to-node path of every tree yields a rule body (the conjunction
of conditions along the path, right branches negated); conditions are
deduplicated into a global table with dense 1-based ids. A rule is scored
as the binary classifier "covered implies predicted class": the confusion
counts are kept raw, the derived metrics are stored on the 0-100 integer
scale (times 100, rounded half up).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .ensemble import Ensemble, SplitCondition

LEAF_ONLY = "leaf"
ALL_NODES = "all"


@dataclass
class ConditionTable:
    conditions: list[SplitCondition] = field(default_factory=list)

    def __post_init__(self):
        self._index = {c.key(): i + 1 for i, c in enumerate(self.conditions)}

    def intern(self, cond: SplitCondition) -> int:
        cid = self._index.get(cond.key())
        if cid is None:
            self.conditions.append(cond)
            cid = len(self.conditions)
            self._index[cond.key()] = cid
        return cid

    def get(self, cid: int) -> SplitCondition:
        return self.conditions[cid - 1]

    def __len__(self) -> int:
        return len(self.conditions)

    def mask_matrix(self, x: np.ndarray) -> np.ndarray:
        """(len(self), n) boolean coverage matrix, row i for condition id i+1."""
        if not self.conditions:
            return np.zeros((0, x.shape[0]), dtype=bool)
        return np.stack([c.mask(x) for c in self.conditions])


@dataclass
class Rule:
    id: int
    body: frozenset[int]
    predicted_class: int
    origin: tuple[int, int]  # (tree index, node id)
    zero_coverage: bool = False

    def __post_init__(self):
        if not self.body:
            raise ValueError("rule bodies must be nonempty")


def _round_half_up(num: int, den: int) -> int:
    """round(100 * num / den) with half-up ties, in exact integer arithmetic."""
    if den == 0:
        return 0
    return (200 * num + den) // (2 * den)


@dataclass
class RuleMetrics:
    size: int
    support: int
    accuracy: int
    error_rate: int
    precision: int
    recall: int
    f1: int
    confusion: tuple[int, int, int, int]  # (tp, tn, fp, fn)

    @classmethod
    def from_confusion(cls, tp: int, tn: int, fp: int, fn: int, size: int) -> "RuleMetrics":
        n = tp + tn + fp + fn
        accuracy = _round_half_up(tp + tn, n)
        return cls(
            size=size,
            support=_round_half_up(tp + fp, n),
            accuracy=accuracy,
            error_rate=100 - accuracy,
            precision=_round_half_up(tp, tp + fp),
            recall=_round_half_up(tp, tp + fn),
            f1=_round_half_up(2 * tp, 2 * tp + fp + fn),
            confusion=(tp, tn, fp, fn),
        )


@dataclass
class CandidateRuleSet:
    rules: list[tuple[Rule, RuleMetrics]]
    conditions: ConditionTable
    classes: list[int]
    source: str
    stump: bool = False

    def __len__(self) -> int:
        return len(self.rules)

    def rule_by_id(self, rid: int) -> tuple[Rule, RuleMetrics]:
        rule, metrics = self.rules[rid - 1]
        assert rule.id == rid
        return rule, metrics


def confusion_for(cover: np.ndarray, y: np.ndarray, positive: int) -> tuple[int, int, int, int]:
    is_pos = y == positive
    tp = int(np.count_nonzero(cover & is_pos))
    fp = int(np.count_nonzero(cover & ~is_pos))
    fn = int(np.count_nonzero(~cover & is_pos))
    tn = int(np.count_nonzero(~cover & ~is_pos))
    return tp, tn, fp, fn


def _pick_class(cover: np.ndarray, data: Dataset) -> tuple[int, bool]:
    counts = np.bincount(data.y[cover], minlength=data.n_classes)
    if counts.sum() == 0:
        return data.majority_class(), True
    return int(np.argmax(counts)), False


def assign_class(conditions, data: Dataset) -> int:
    """Class with the most covered rows; ties break low, no coverage falls
    back to the dataset majority."""
    cover = np.ones(data.n, dtype=bool)
    for cond in conditions:
        cover &= cond.mask(data.x)
    cls, _ = _pick_class(cover, data)
    return cls


def rule_cover(rule: Rule, data: Dataset, table: ConditionTable) -> np.ndarray:
    cover = np.ones(data.n, dtype=bool)
    for cid in rule.body:
        cover &= table.get(cid).mask(data.x)
    return cover


def compute_metrics(rule: Rule, data: Dataset, table: ConditionTable) -> RuleMetrics:
    cover = rule_cover(rule, data, table)
    tp, tn, fp, fn = confusion_for(cover, data.y, rule.predicted_class)
    return RuleMetrics.from_confusion(tp, tn, fp, fn, size=len(rule.body))


def extract_rules(ens: Ensemble, data: Dataset, mode: str = LEAF_ONLY) -> CandidateRuleSet:
    """Build the candidate rule set of an ensemble, scored on ``data``.

    LEAF_ONLY keeps one rule per leaf per tree; ALL_NODES additionally keeps
    every proper path prefix (all internal nodes below the root). Duplicate
    bodies merge, keeping the earliest (tree, node) origin. A stump-only
    ensemble yields an empty set flagged ``stump`` instead of an error.
    """
    if mode not in (LEAF_ONLY, ALL_NODES):
        raise ValueError(f"unknown extraction mode {mode!r}")
    if data.n == 0:
        raise ValueError("cannot score rules on an empty dataset")
    ens.check_compatible(data.schema)

    classes = list(range(data.n_classes))
    source = ens.fingerprint()
    if ens.is_stump:
        return CandidateRuleSet([], ConditionTable(), classes, source, stump=True)

    table = ConditionTable()
    bodies: dict[frozenset, tuple[int, int]] = {}
    for k, tree in enumerate(ens.trees):
        for nid, conds, is_leaf in tree.iter_paths():
            if not conds:
                continue  # the root carries no conditions
            if mode == LEAF_ONLY and not is_leaf:
                continue
            body = frozenset(table.intern(c) for c in conds)
            bodies.setdefault(body, (k, nid))

    masks = table.mask_matrix(data.x)
    rules: list[tuple[Rule, RuleMetrics]] = []
    for body, origin in bodies.items():
        cover = masks[[cid - 1 for cid in body]].all(axis=0)
        cls, zero = _pick_class(cover, data)
        rule = Rule(len(rules) + 1, body, cls, origin, zero_coverage=zero)
        tp, tn, fp, fn = confusion_for(cover, data.y, cls)
        rules.append((rule, RuleMetrics.from_confusion(tp, tn, fp, fn, size=len(body))))
    return CandidateRuleSet(rules, table, classes, source)


def emit_facts(crs: CandidateRuleSet) -> str:
    """Render the candidate set as answer-set facts, one line per rule."""
    lines = [f"class({c})." for c in crs.classes]
    for rule, m in crs.rules:
        parts = [f"rule({rule.id})."]
        parts += [f"condition({rule.id},{cid})." for cid in sorted(rule.body)]
        parts += [
            f"support({rule.id},{m.support}).",
            f"size({rule.id},{m.size}).",
            f"accuracy({rule.id},{m.accuracy}).",
            f"error_rate({rule.id},{m.error_rate}).",
            f"precision({rule.id},{m.precision}).",
            f"recall({rule.id},{m.recall}).",
            f"f1_score({rule.id},{m.f1}).",
            f"predict_class({rule.id},{rule.predicted_class}).",
        ]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Serialization (cache between CLI invocations)


def _condition_to_doc(cond: SplitCondition) -> dict:
    doc: dict = {"feature": cond.feature, "op": cond.op}
    if cond.threshold is not None:
        doc["threshold"] = cond.threshold
    if cond.values is not None:
        doc["values"] = sorted(cond.values)
    return doc


def _condition_from_doc(doc: dict) -> SplitCondition:
    values = doc.get("values")
    return SplitCondition(
        int(doc["feature"]), doc["op"],
        threshold=doc.get("threshold"),
        values=frozenset(values) if values is not None else None,
    )


def candidates_to_doc(crs: CandidateRuleSet) -> dict:
    return {
        "source": crs.source,
        "classes": list(crs.classes),
        "stump": crs.stump,
        "conditions": [_condition_to_doc(c) for c in crs.conditions.conditions],
        "rules": [
            {
                "id": rule.id,
                "body": sorted(rule.body),
                "class": rule.predicted_class,
                "origin": list(rule.origin),
                "zero_coverage": rule.zero_coverage,
                "metrics": {
                    "size": m.size, "support": m.support, "accuracy": m.accuracy,
                    "error_rate": m.error_rate, "precision": m.precision,
                    "recall": m.recall, "f1": m.f1, "confusion": list(m.confusion),
                },
            }
            for rule, m in crs.rules
        ],
    }


def candidates_from_doc(doc: dict) -> CandidateRuleSet:
    table = ConditionTable([_condition_from_doc(c) for c in doc["conditions"]])
    rules = []
    for rd in doc["rules"]:
        rule = Rule(int(rd["id"]), frozenset(rd["body"]), int(rd["class"]),
                    tuple(rd["origin"]), bool(rd.get("zero_coverage", False)))
        md = rd["metrics"]
        metrics = RuleMetrics(
            size=md["size"], support=md["support"], accuracy=md["accuracy"],
            error_rate=md["error_rate"], precision=md["precision"], recall=md["recall"],
            f1=md["f1"], confusion=tuple(md["confusion"]),
        )
        rules.append((rule, metrics))
    return CandidateRuleSet(rules, table, list(doc["classes"]), doc["source"], bool(doc["stump"]))


def save_candidates(crs: CandidateRuleSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(candidates_to_doc(crs), fh, separators=(",", ":"))
        fh.write("\n")


def load_candidates(path) -> CandidateRuleSet:
    with open(path, "r", encoding="utf-8") as fh:
        return candidates_from_doc(json.load(fh))
