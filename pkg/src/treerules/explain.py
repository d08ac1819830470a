"""Global and local explanations: extraction, filtering, and solving composed.

A global explanation selects rules from the whole candidate set. A local
explanation restricts candidates to the leaves active for one instance,
forces every candidate's consequent to the model's prediction, recomputes
the metrics under that consequent, and solves for the predicted class only.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .dataset import CATEGORICAL, Dataset
from .ensemble import Ensemble
from .rules import (
    LEAF_ONLY,
    CandidateRuleSet,
    ConditionTable,
    Rule,
    RuleMetrics,
    confusion_for,
    extract_rules,
)
from .selection import (
    INFEASIBLE,
    ObjectiveSpec,
    RuleSetSolution,
    SelectionConfig,
    SolverStats,
    ValidityConfig,
    ValidityReport,
    filter_valid,
    solve,
)

REASON_STUMP = "stump"
REASON_INFEASIBLE = "infeasible"
REASON_TIMEOUT = "timeout"


@dataclass
class GlobalExplanation:
    rules: list[tuple[Rule, RuleMetrics]]
    conditions: ConditionTable
    solver: RuleSetSolution
    config: SelectionConfig
    extraction_mode: str
    model_fingerprint: str
    validity: ValidityReport | None
    reason: str | None = None


@dataclass
class LocalExplanation:
    instance: np.ndarray
    model_prediction: int
    rules: list[tuple[Rule, RuleMetrics]]
    conditions: ConditionTable
    solver: RuleSetSolution
    config: SelectionConfig
    model_fingerprint: str
    reason: str | None = None


def default_local_config() -> SelectionConfig:
    """Local defaults: no validity bounds, one rule, precision-coverage."""
    return SelectionConfig(
        validity=ValidityConfig(),
        max_rules_per_class=1,
        objective=ObjectiveSpec.precision_coverage(),
    )


def _empty_solution() -> RuleSetSolution:
    return RuleSetSolution([], (), INFEASIBLE, SolverStats())


def explain_global(ens: Ensemble, data: Dataset, cfg: SelectionConfig | None = None,
                   mode: str = LEAF_ONLY, budget: float | None = None) -> GlobalExplanation:
    cfg = cfg if cfg is not None else SelectionConfig()
    crs = extract_rules(ens, data, mode)
    fp = ens.fingerprint()
    if crs.stump:
        return GlobalExplanation([], crs.conditions, _empty_solution(), cfg, mode, fp,
                                 validity=None, reason=REASON_STUMP)
    report = filter_valid(crs, cfg.validity)
    sol = solve(crs, cfg, budget)
    rules = [crs.rule_by_id(rid) for rid in sol.selected]
    reason = None
    if not rules:
        reason = REASON_INFEASIBLE if sol.status == INFEASIBLE else REASON_TIMEOUT
    return GlobalExplanation(rules, crs.conditions, sol, cfg, mode, fp, report, reason)


def local_candidates(ens: Ensemble, data: Dataset, instance) -> CandidateRuleSet:
    """Rules of the leaves active for ``instance``, consequents replaced by the
    model prediction and metrics recomputed on ``data`` under that consequent."""
    ens.check_compatible(data.schema)
    instance = np.asarray(instance, dtype=np.float64)
    prediction = ens.predict(instance)
    table = ConditionTable()
    bodies: dict[frozenset, tuple[int, int]] = {}
    for k, tree in enumerate(ens.trees):
        leaf_id, conds = tree.route_with_conditions(instance)
        if not conds:
            continue  # stump tree contributes no rule
        body = frozenset(table.intern(c) for c in conds)
        bodies.setdefault(body, (k, leaf_id))
    masks = table.mask_matrix(data.x)
    rules = []
    for body, origin in bodies.items():
        cover = masks[[cid - 1 for cid in body]].all(axis=0)
        covered = int(np.count_nonzero(cover))
        rule = Rule(len(rules) + 1, body, prediction, origin, zero_coverage=covered == 0)
        tp, tn, fp, fn = confusion_for(cover, data.y, prediction)
        rules.append((rule, RuleMetrics.from_confusion(tp, tn, fp, fn, size=len(body))))
    return CandidateRuleSet(rules, table, [prediction], ens.fingerprint(),
                            stump=not bodies and ens.is_stump)


def explain_local(ens: Ensemble, data: Dataset, instance, cfg: SelectionConfig | None = None,
                  budget: float | None = None) -> LocalExplanation:
    cfg = cfg if cfg is not None else default_local_config()
    instance = np.asarray(instance, dtype=np.float64)
    crs = local_candidates(ens, data, instance)
    prediction = crs.classes[0] if crs.rules else ens.predict(instance)
    fp = ens.fingerprint()
    if crs.stump or not crs.rules:
        return LocalExplanation(instance, prediction, [], crs.conditions, _empty_solution(),
                                cfg, fp, reason=REASON_STUMP)
    cfg = dataclasses.replace(cfg, target_classes=[prediction])
    sol = solve(crs, cfg, budget)
    rules = [crs.rule_by_id(rid) for rid in sol.selected]
    for rule, _ in rules:
        assert rule.predicted_class == prediction
        assert all(crs.conditions.get(cid).holds(instance) for cid in rule.body)
    reason = None
    if not rules:
        reason = REASON_INFEASIBLE if sol.status == INFEASIBLE else REASON_TIMEOUT
    return LocalExplanation(instance, prediction, rules, crs.conditions, sol, cfg, fp, reason)


# ---------------------------------------------------------------------------
# Rendering


def _render_value(value, column):
    if column.kind == CATEGORICAL:
        code = int(value)
        if 0 <= code < len(column.categories):
            return column.categories[code]
        return f"<unseen:{code}>"  # codes outside the trained vocabulary
    return f"{float(value):g}"


def format_rule(rule: Rule, metrics: RuleMetrics, table: ConditionTable, ens: Ensemble) -> str:
    conds = " ∧ ".join(table.get(cid).render(ens.features) for cid in sorted(rule.body))
    head = f"class {ens.classes[rule.predicted_class]} ⇐ {conds}"
    stats = (f"[accuracy {metrics.accuracy}, precision {metrics.precision}, "
             f"recall {metrics.recall}, f1 {metrics.f1}, support {metrics.support}, "
             f"size {metrics.size}]")
    return f"{head}\n    {stats}"


def _objective_entry(value):
    return value if isinstance(value, int) else str(value)


def format_global(expl: GlobalExplanation, ens: Ensemble) -> str:
    lines = [
        "global explanation",
        f"model: {expl.model_fingerprint[:12]}  status: {expl.solver.status}",
    ]
    if expl.reason:
        lines.append(f"empty rule set: {expl.reason}")
    if expl.solver.objective_vector:
        vec = ", ".join(str(_objective_entry(v)) for v in expl.solver.objective_vector)
        lines.append(f"objective: ({vec})")
    for rule, metrics in expl.rules:
        lines.append(format_rule(rule, metrics, expl.conditions, ens))
    return "\n".join(lines) + "\n"


def format_local(expl: LocalExplanation, ens: Ensemble) -> str:
    rendered = ", ".join(
        f"{col.name}={_render_value(v, col)}" for col, v in zip(ens.features, expl.instance)
    )
    lines = [
        "local explanation",
        f"model: {expl.model_fingerprint[:12]}  status: {expl.solver.status}",
        f"instance: {rendered}",
        f"prediction: {ens.classes[expl.model_prediction]}",
    ]
    if expl.reason:
        lines.append(f"empty rule set: {expl.reason}")
    for rule, metrics in expl.rules:
        lines.append(format_rule(rule, metrics, expl.conditions, ens))
    return "\n".join(lines) + "\n"


def _rules_to_doc(rules, table: ConditionTable, ens: Ensemble) -> list[dict]:
    out = []
    for rule, m in rules:
        out.append({
            "id": rule.id,
            "class_index": rule.predicted_class,
            "class": ens.classes[rule.predicted_class],
            "conditions": [table.get(cid).render(ens.features) for cid in sorted(rule.body)],
            "condition_ids": sorted(rule.body),
            "metrics": {
                "size": m.size, "support": m.support, "accuracy": m.accuracy,
                "error_rate": m.error_rate, "precision": m.precision,
                "recall": m.recall, "f1": m.f1,
            },
        })
    return out


def _solution_doc(sol: RuleSetSolution) -> dict:
    return {
        "status": sol.status,
        "selected": list(sol.selected),
        "objective_vector": [_objective_entry(v) for v in sol.objective_vector],
        "nodes_explored": sol.stats.nodes,
        "wall_time": sol.stats.wall_time,
    }


def global_to_doc(expl: GlobalExplanation, ens: Ensemble) -> dict:
    return {
        "kind": "global",
        "model_fingerprint": expl.model_fingerprint,
        "extraction_mode": expl.extraction_mode,
        "reason": expl.reason,
        "solver": _solution_doc(expl.solver),
        "rules": _rules_to_doc(expl.rules, expl.conditions, ens),
    }


def local_to_doc(expl: LocalExplanation, ens: Ensemble) -> dict:
    return {
        "kind": "local",
        "model_fingerprint": expl.model_fingerprint,
        "instance": [
            _render_value(v, col) if col.kind == CATEGORICAL else float(v)
            for col, v in zip(ens.features, expl.instance)
        ],
        "prediction_index": expl.model_prediction,
        "prediction": ens.classes[expl.model_prediction],
        "reason": expl.reason,
        "solver": _solution_doc(expl.solver),
        "rules": _rules_to_doc(expl.rules, expl.conditions, ens),
    }
