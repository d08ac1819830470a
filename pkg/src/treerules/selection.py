"""Rule-set selection: per-rule validity bounds, dominance filtering,
collective limits, and exact lexicographic multi-objective search.

Arithmetic modes:
  * ASP_PARITY evaluates objectives exactly the way answer-set optimization
    would: ratio terms use truncating integer division, and within one
    priority level the aggregated terms form a *set* of (weight, rule) tuples,
    so identical tuples are counted once. This includes the overlap objective,
    whose partner rule is projected out of the tuple.
  * EXACT_RATIONAL evaluates the mathematically intended objective with
    exact fractions and no tuple deduplication.

Objective vectors are reported maximize-oriented (bigger is better), one
entry per priority level, highest priority first. Among optimal selections
the solver returns the one whose sorted id tuple is lexicographically
smallest.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .rules import CandidateRuleSet, Rule, RuleMetrics, emit_facts

# dominance modes / scopes
DOMINANCE_OFF = "off"
DOMINANCE_ACC_SUPPORT = "acc_support"
SAME_CLASS = "same_class"
ALL_VALID = "all_valid"

# arithmetic modes
ASP_PARITY = "asp_parity"
EXACT_RATIONAL = "exact_rational"

# objective metrics and directions
ACCURACY = "accuracy"
SUPPORT = "support"
SIZE = "size"
PRECISION = "precision"
RECALL = "recall"
AVG_ACC_PER_SIZE = "avg_accuracy_per_size"
AVG_PREC_PER_SIZE = "avg_precision_per_size"
SUPPORT_PER_SIZE = "support_per_size"
RECALL_PER_SIZE = "recall_per_size"
OVERLAP = "overlap"
MAX = "max"
MIN = "min"

# solver statuses
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
TIMEOUT_BEST_KNOWN = "timeout_best_known"

_PLAIN_METRICS = (ACCURACY, SUPPORT, SIZE, PRECISION, RECALL)
_PER_SELECTION_METRICS = (AVG_ACC_PER_SIZE, AVG_PREC_PER_SIZE)
_PER_SIZE_METRICS = (SUPPORT_PER_SIZE, RECALL_PER_SIZE)
_ALL_METRICS = _PLAIN_METRICS + _PER_SELECTION_METRICS + _PER_SIZE_METRICS + (OVERLAP,)


@dataclass(frozen=True)
class ObjectiveTerm:
    metric: str
    direction: str
    priority: int = 0

    def __post_init__(self):
        if self.metric not in _ALL_METRICS:
            raise ValueError(f"unknown objective metric {self.metric!r}")
        if self.direction not in (MAX, MIN):
            raise ValueError(f"direction must be {MAX!r} or {MIN!r}")


@dataclass
class ObjectiveSpec:
    terms: list[ObjectiveTerm] = field(default_factory=list)

    @classmethod
    def accuracy_coverage(cls) -> "ObjectiveSpec":
        return cls([ObjectiveTerm(AVG_ACC_PER_SIZE, MAX, 3), ObjectiveTerm(SUPPORT_PER_SIZE, MAX, 2)])

    @classmethod
    def precision_coverage(cls) -> "ObjectiveSpec":
        return cls([ObjectiveTerm(AVG_PREC_PER_SIZE, MAX, 3), ObjectiveTerm(SUPPORT_PER_SIZE, MAX, 2)])

    @classmethod
    def precision_recall(cls) -> "ObjectiveSpec":
        return cls([ObjectiveTerm(AVG_PREC_PER_SIZE, MAX, 3), ObjectiveTerm(RECALL_PER_SIZE, MAX, 2)])

    @classmethod
    def simple_sums(cls) -> "ObjectiveSpec":
        return cls([ObjectiveTerm(ACCURACY, MAX, 0), ObjectiveTerm(SUPPORT, MAX, 0),
                    ObjectiveTerm(SIZE, MIN, 0)])

    @property
    def levels(self) -> list[int]:
        """Distinct priorities, most important first."""
        return sorted({t.priority for t in self.terms}, reverse=True)

    def terms_at(self, priority: int) -> list[ObjectiveTerm]:
        return [t for t in self.terms if t.priority == priority]

    @property
    def has_overlap(self) -> bool:
        return any(t.metric == OVERLAP for t in self.terms)

    @property
    def needs_selection_count(self) -> bool:
        return any(t.metric in _PER_SELECTION_METRICS for t in self.terms)


OBJECTIVE_PRESETS = {
    "accuracy-coverage": ObjectiveSpec.accuracy_coverage,
    "precision-coverage": ObjectiveSpec.precision_coverage,
    "precision-recall": ObjectiveSpec.precision_recall,
    "simple-sums": ObjectiveSpec.simple_sums,
}


@dataclass
class ValidityConfig:
    max_size: int | None = None
    max_error_rate: int | None = None
    min_precision: int | None = None
    min_recall: int | None = None
    min_support: int | None = None
    min_accuracy: int | None = None
    min_f1: int | None = None

    def active(self) -> bool:
        return any(v is not None for v in vars(self).values())


@dataclass
class ValidityReport:
    total: int
    valid_ids: list[int]
    eliminated: dict[str, int]
    safety_violations: list[str]


@dataclass
class SelectionConfig:
    validity: ValidityConfig = field(default_factory=ValidityConfig)
    max_rules_per_class: int = 3
    min_rules_per_class: int = 1
    dominance: str = DOMINANCE_OFF
    dominance_scope: str = SAME_CLASS
    max_total_conditions: int | None = None
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec.accuracy_coverage)
    arithmetic: str = ASP_PARITY
    minimize_overlap: bool = False
    target_classes: list[int] | None = None

    def __post_init__(self):
        if not 1 <= self.min_rules_per_class <= self.max_rules_per_class:
            raise ValueError("need 1 <= min_rules_per_class <= max_rules_per_class")
        if self.dominance not in (DOMINANCE_OFF, DOMINANCE_ACC_SUPPORT):
            raise ValueError(f"unknown dominance mode {self.dominance!r}")
        if self.dominance_scope not in (SAME_CLASS, ALL_VALID):
            raise ValueError(f"unknown dominance scope {self.dominance_scope!r}")
        if self.arithmetic not in (ASP_PARITY, EXACT_RATIONAL):
            raise ValueError(f"unknown arithmetic mode {self.arithmetic!r}")

    def effective_objective(self) -> ObjectiveSpec:
        terms = list(self.objective.terms)
        if self.minimize_overlap and not any(t.metric == OVERLAP for t in terms):
            terms.append(ObjectiveTerm(OVERLAP, MIN, 0))
        return ObjectiveSpec(terms)


@dataclass
class SolverStats:
    nodes: int = 0
    wall_time: float = 0.0


@dataclass
class RuleSetSolution:
    selected: list[int]
    objective_vector: tuple
    status: str
    stats: SolverStats


# ---------------------------------------------------------------------------
# Validity and dominance


_BOUNDS = (
    # (config attr, metric attr, comparison, safe-side description)
    ("max_size", "size", "gt", "min"),
    ("max_error_rate", "error_rate", "gt", "min"),
    ("min_precision", "precision", "lt", "max"),
    ("min_recall", "recall", "lt", "max"),
    ("min_support", "support", "lt", "max"),
    ("min_accuracy", "accuracy", "lt", "max"),
    ("min_f1", "f1", "lt", "max"),
)


def filter_valid(crs: CandidateRuleSet, cfg: ValidityConfig) -> ValidityReport:
    """Apply the per-rule bounds; count eliminations and flag unsafe bounds.

    A bound is unsafe when it alone eliminates every candidate (max-type
    bounds below the smallest observed value, min-type bounds above the
    largest); unsafe bounds are reported, not errors, and solving then comes
    back infeasible.
    """
    eliminated = {}
    safety = []
    valid = []
    for rule, metrics in crs.rules:
        ok = True
        for attr, metric, op, _ in _BOUNDS:
            bound = getattr(cfg, attr)
            if bound is None:
                continue
            value = getattr(metrics, metric)
            hit = value > bound if op == "gt" else value < bound
            if hit:
                eliminated[attr] = eliminated.get(attr, 0) + 1
                ok = False
        if ok:
            valid.append(rule.id)
    if crs.rules:
        for attr, metric, op, side in _BOUNDS:
            bound = getattr(cfg, attr)
            if bound is None:
                continue
            values = [getattr(m, metric) for _, m in crs.rules]
            if op == "gt" and bound < min(values):
                safety.append(f"{attr}={bound} is below the smallest {metric} ({min(values)}): "
                              "all rules invalid")
            if op == "lt" and bound > max(values):
                safety.append(f"{attr}={bound} is above the largest {metric} ({max(values)}): "
                              "all rules invalid")
    return ValidityReport(len(crs.rules), valid, eliminated, safety)


def dominates(x: RuleMetrics, y: RuleMetrics) -> bool:
    """True iff y dominates x on the (accuracy, support) pair."""
    return (y.accuracy > x.accuracy and y.support >= x.support) or (
        y.accuracy >= x.accuracy and y.support > x.support
    )


def overlap(x: Rule, y: Rule) -> int:
    """Number of shared condition ids between two distinct rules."""
    if x.id == y.id:
        raise ValueError("overlap is defined for distinct rules")
    return len(x.body & y.body)


def _non_dominated(ids: list[int], crs: CandidateRuleSet, scope: str) -> list[int]:
    """Rules not dominated by any valid rule in scope (vectorized pairwise scan)."""
    if not ids:
        return []
    acc = np.array([crs.rule_by_id(i)[1].accuracy for i in ids])
    sup = np.array([crs.rule_by_id(i)[1].support for i in ids])
    cls = np.array([crs.rule_by_id(i)[0].predicted_class for i in ids])
    a_x, a_y = acc[:, None], acc[None, :]
    s_x, s_y = sup[:, None], sup[None, :]
    dominated_by = ((a_y > a_x) & (s_y >= s_x)) | ((a_y >= a_x) & (s_y > s_x))
    if scope == SAME_CLASS:
        dominated_by &= cls[:, None] == cls[None, :]
    keep = ~dominated_by.any(axis=1)
    return [i for i, k in zip(ids, keep) if k]


# ---------------------------------------------------------------------------
# Objective evaluation


def _div(num: int, den: int, arithmetic: str):
    return num // den if arithmetic == ASP_PARITY else Fraction(num, den)


def _term_weight(metric: str, m: RuleMetrics, sr: int, arithmetic: str):
    if metric == ACCURACY:
        return m.accuracy
    if metric == SUPPORT:
        return m.support
    if metric == SIZE:
        return m.size
    if metric == PRECISION:
        return m.precision
    if metric == RECALL:
        return m.recall
    if metric == AVG_ACC_PER_SIZE:
        return _div(m.accuracy, m.size * sr, arithmetic)
    if metric == AVG_PREC_PER_SIZE:
        return _div(m.precision, m.size * sr, arithmetic)
    if metric == SUPPORT_PER_SIZE:
        return _div(m.support, m.size, arithmetic)
    if metric == RECALL_PER_SIZE:
        return _div(m.recall, m.size, arithmetic)
    raise ValueError(f"no per-rule weight for metric {metric!r}")


def _rule_level_weight(terms, m: RuleMetrics, sr: int, arithmetic: str):
    """Combined per-rule contribution of one priority level (overlap excluded)."""
    if arithmetic == ASP_PARITY:
        costs = {
            (-1 if t.direction == MAX else 1) * _term_weight(t.metric, m, sr, arithmetic)
            for t in terms
            if t.metric != OVERLAP
        }
        return -sum(costs)
    total = 0
    for t in terms:
        if t.metric == OVERLAP:
            continue
        w = _term_weight(t.metric, m, sr, arithmetic)
        total += w if t.direction == MAX else -w
    return total


def objective_vector(selected: list[int], crs: CandidateRuleSet, spec: ObjectiveSpec,
                     arithmetic: str) -> tuple:
    """Maximize-oriented value per priority level for a concrete selection."""
    sr = len(selected)
    out = []
    for level in spec.levels:
        terms = spec.terms_at(level)
        if arithmetic == ASP_PARITY:
            tuples = set()
            for t in terms:
                sign = -1 if t.direction == MAX else 1
                if t.metric == OVERLAP:
                    for x in selected:
                        bx = crs.rule_by_id(x)[0].body
                        for y in selected:
                            if x != y:
                                cnt = len(bx & crs.rule_by_id(y)[0].body)
                                tuples.add((sign * cnt, x))
                else:
                    for rid in selected:
                        w = _term_weight(t.metric, crs.rule_by_id(rid)[1], sr, arithmetic)
                        tuples.add((sign * w, rid))
            out.append(-sum(w for w, _ in tuples))
        else:
            total = 0
            for t in terms:
                sign = 1 if t.direction == MAX else -1
                if t.metric == OVERLAP:
                    for x in selected:
                        bx = crs.rule_by_id(x)[0].body
                        for y in selected:
                            if x != y:
                                total += sign * len(bx & crs.rule_by_id(y)[0].body)
                else:
                    for rid in selected:
                        total += sign * _term_weight(t.metric, crs.rule_by_id(rid)[1], sr, arithmetic)
            out.append(total)
    return tuple(out)


# ---------------------------------------------------------------------------
# Exact search


def _vadd(a: tuple, b: tuple) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


class _Deadline:
    def __init__(self, budget):
        self.at = time.monotonic() + budget if budget is not None else None
        self.hit = False

    def expired(self) -> bool:
        if self.at is not None and time.monotonic() > self.at:
            self.hit = True
        return self.hit


def _better(a, b) -> bool:
    """(vector, ids) preference: larger vector, then smaller id tuple."""
    if b is None:
        return True
    if a[0] != b[0]:
        return a[0] > b[0]
    return a[1] < b[1]


def _solve_separable(pools, crs, cfg, spec, deadline, stats):
    """Exact DP for objectives whose terms are per-rule sums.

    One pass per per-class count vector (the selection size fixes the SR
    factor in averaged terms); items are processed in descending id order so
    that equal-value states keep the lexicographically smallest sorted id
    tuple.
    """
    classes = list(pools)
    slot = {c: i for i, c in enumerate(classes)}
    budget = cfg.max_total_conditions
    best = None
    ranges = [range(cfg.min_rules_per_class, min(cfg.max_rules_per_class, len(pools[c])) + 1)
              for c in classes]
    if any(len(r) == 0 for r in ranges):
        return None
    items = sorted((rid for c in classes for rid in pools[c]), reverse=True)
    rule_class = {rid: crs.rule_by_id(rid)[0].predicted_class for rid in items}
    rule_size = {rid: crs.rule_by_id(rid)[1].size for rid in items}
    zero = tuple(0 for _ in spec.levels)

    for counts in itertools.product(*ranges):
        if deadline.expired():
            break
        sr = sum(counts)
        weights = {
            rid: tuple(
                _rule_level_weight(spec.terms_at(level), crs.rule_by_id(rid)[1], sr, cfg.arithmetic)
                for level in spec.levels
            )
            for rid in items
        }
        target = tuple(counts)
        states = {(tuple(0 for _ in classes), 0): (zero, ())}
        for rid in items:
            ci = slot[rule_class[rid]]
            w, s = weights[rid], rule_size[rid]
            updates = {}
            for (used, size_used), value in states.items():
                if used[ci] >= target[ci]:
                    continue
                if budget is not None and size_used + s > budget:
                    continue
                key = (used[:ci] + (used[ci] + 1,) + used[ci + 1:], size_used + s)
                cand = (_vadd(value[0], w), (rid,) + value[1])
                stats.nodes += 1
                if _better(cand, updates.get(key, states.get(key))):
                    updates[key] = cand
            for key, cand in updates.items():
                if _better(cand, states.get(key)):
                    states[key] = cand
        for (used, _), value in states.items():
            if used == target and _better(value, best):
                best = value
    return best


def _solve_enumerate(pools, crs, cfg, spec, deadline, stats):
    """Exhaustive search over per-class combinations (needed for overlap terms)."""
    classes = list(pools)
    budget = cfg.max_total_conditions
    sizes = {rid: crs.rule_by_id(rid)[1].size for c in classes for rid in pools[c]}

    def sort_key(rid):
        m = crs.rule_by_id(rid)[1]
        first = spec.levels[0] if spec.levels else 0
        w = _rule_level_weight(spec.terms_at(first), m, len(classes), cfg.arithmetic) if spec.levels else 0
        return (-w, rid)

    ordered = {c: sorted(pools[c], key=sort_key) for c in classes}
    best = None
    per_class = []
    for c in classes:
        options = []
        hi = min(cfg.max_rules_per_class, len(ordered[c]))
        for n_c in range(cfg.min_rules_per_class, hi + 1):
            options.extend(itertools.combinations(ordered[c], n_c))
        if not options:
            return None
        per_class.append(options)
    for pick in itertools.product(*per_class):
        stats.nodes += 1
        if stats.nodes % 256 == 0 and deadline.expired():
            break
        selected = [rid for group in pick for rid in group]
        if budget is not None and sum(sizes[rid] for rid in selected) > budget:
            continue
        vec = objective_vector(selected, crs, spec, cfg.arithmetic)
        cand = (vec, tuple(sorted(selected)))
        if _better(cand, best):
            best = cand
    return best


def solve(crs: CandidateRuleSet, cfg: SelectionConfig, budget: float | None = None) -> RuleSetSolution:
    """Exact search for the best rule set under ``cfg``.

    ``budget`` is a wall-time limit in seconds; when it expires the incumbent
    is returned with TIMEOUT_BEST_KNOWN status.
    """
    t0 = time.monotonic()
    stats = SolverStats()
    deadline = _Deadline(budget)
    spec = cfg.effective_objective()

    report = filter_valid(crs, cfg.validity)
    pool = report.valid_ids
    if cfg.dominance == DOMINANCE_ACC_SUPPORT:
        pool = _non_dominated(pool, crs, cfg.dominance_scope)
    classes = cfg.target_classes if cfg.target_classes is not None else list(crs.classes)
    pools = {c: [rid for rid in pool if crs.rule_by_id(rid)[0].predicted_class == c] for c in classes}

    if any(not pools[c] for c in classes) or not classes:
        stats.wall_time = time.monotonic() - t0
        return RuleSetSolution([], (), INFEASIBLE, stats)

    search = _solve_enumerate if spec.has_overlap else _solve_separable
    best = search(pools, crs, cfg, spec, deadline, stats)
    stats.wall_time = time.monotonic() - t0
    if best is None:
        status = TIMEOUT_BEST_KNOWN if deadline.hit else INFEASIBLE
        return RuleSetSolution([], (), status, stats)
    vec, ids = best
    selected = sorted(ids)
    if spec.has_overlap:
        final_vec = vec
    else:
        # DP accumulates per-rule weights; report the full semantics instead
        final_vec = objective_vector(selected, crs, spec, cfg.arithmetic)
    status = TIMEOUT_BEST_KNOWN if deadline.hit else OPTIMAL
    return RuleSetSolution(selected, final_vec, status, stats)


# ---------------------------------------------------------------------------
# Answer-set program emission


_INVALID_TEMPLATES = {
    "max_size": "invalid(I) :- size(I,S), S > {b}, rule(I).",
    "max_error_rate": "invalid(I) :- error_rate(I,E), E > {b}, rule(I).",
    "min_precision": "invalid(I) :- precision(I,P), P < {b}, rule(I).",
    "min_recall": "invalid(I) :- recall(I,R), R < {b}, rule(I).",
    "min_support": "invalid(I) :- support(I,Sp), Sp < {b}, rule(I).",
    "min_accuracy": "invalid(I) :- accuracy(I,A), A < {b}, rule(I).",
    "min_f1": "invalid(I) :- f1_score(I,F), F < {b}, rule(I).",
}

_INVALID_ORDER = ("max_size", "max_error_rate", "min_precision", "min_recall",
                  "min_support", "min_accuracy", "min_f1")


def _optimize_statement(term: ObjectiveTerm) -> str:
    p = f"@{term.priority}" if term.priority else ""
    head = "#maximize" if term.direction == MAX else "#minimize"
    if term.metric == ACCURACY:
        body = f"A{p},X : selected(X), accuracy(X,A)"
    elif term.metric == SUPPORT:
        body = f"S{p},X : selected(X), support(X,S)"
    elif term.metric == SIZE:
        body = f"L{p},X : selected(X), size(X,L)"
    elif term.metric == PRECISION:
        body = f"P{p},X : selected(X), precision(X,P)"
    elif term.metric == RECALL:
        body = f"R{p},X : selected(X), recall(X,R)"
    elif term.metric == AVG_ACC_PER_SIZE:
        body = f"Ai/(S*SR){p},I : selected(I), size(I,S), accuracy(I,Ai), selected_rules(SR)"
    elif term.metric == AVG_PREC_PER_SIZE:
        body = f"Pi/(S*SR){p},I : selected(I), size(I,S), precision(I,Pi), selected_rules(SR)"
    elif term.metric == SUPPORT_PER_SIZE:
        body = f"Sp/S{p},I : selected(I), size(I,S), support(I,Sp)"
    elif term.metric == RECALL_PER_SIZE:
        body = f"R/S{p},I : selected(I), size(I,S), recall(I,R)"
    elif term.metric == OVERLAP:
        body = f"Cn{p},X : selected(X), selected(Y), rule_overlap(X,Y,Cn)"
    else:
        raise ValueError(f"metric {term.metric!r} has no program encoding")
    return f"{head} {{ {body} }}."


def emit_asp_program(crs: CandidateRuleSet, cfg: SelectionConfig, path=None) -> str:
    """Self-contained program: facts, generator, constraints, objectives.

    Byte-stable for fixed inputs; solvable by any system supporting choice
    rules with bounds, #count/#sum, and prioritized #maximize/#minimize.
    """
    spec = cfg.effective_objective()
    classes = cfg.target_classes if cfg.target_classes is not None else list(crs.classes)
    lines = [f"class({c})." for c in classes]
    facts = emit_facts(crs).splitlines()
    lines += [ln for ln in facts if not ln.startswith("class(")]
    lines.append("")
    lines.append(
        f"{cfg.min_rules_per_class} {{ selected(X) : predict_class(X, K), valid(X) }} "
        f"{cfg.max_rules_per_class} :- class(K)."
    )
    lines.append("valid(X) :- rule(X), not invalid(X).")
    for attr in _INVALID_ORDER:
        bound = getattr(cfg.validity, attr)
        if bound is not None:
            lines.append(_INVALID_TEMPLATES[attr].format(b=bound))
    if cfg.dominance == DOMINANCE_ACC_SUPPORT:
        same = "predict_class(X,K), predict_class(Y,K), " if cfg.dominance_scope == SAME_CLASS else ""
        lines.append("")
        lines.append(":- dominated.")
        lines.append(
            f"gt_acc_geq_cov(Y) :- selected(X), valid(Y), {same}"
            "accuracy(X,Ax), accuracy(Y,Ay), support(X,Spx), support(Y,Spy), Ax < Ay, Spx <= Spy."
        )
        lines.append(
            f"geq_acc_gt_cov(Y) :- selected(X), valid(Y), {same}"
            "accuracy(X,Ax), accuracy(Y,Ay), support(X,Spx), support(Y,Spy), Ax <= Ay, Spx < Spy."
        )
        lines.append("dominated :- valid(Y), gt_acc_geq_cov(Y).")
        lines.append("dominated :- valid(Y), geq_acc_gt_cov(Y).")
    if cfg.max_total_conditions is not None:
        lines.append("")
        lines.append(f":- #sum {{ S,X : size(X,S), selected(X) }} > {cfg.max_total_conditions}.")
    if spec.terms:
        lines.append("")
        if spec.needs_selection_count:
            lines.append("selected_rules(SR) :- SR = #count { I : selected(I) }, SR != 0.")
        if spec.has_overlap:
            lines.append(
                "rule_overlap(X,Y,Cn) :- selected(X), selected(Y), X!=Y, "
                "Cn = #count { Cx : Cx=Cy, condition(X,Cx), condition(Y,Cy) }."
            )
        for level in spec.levels:
            for term in spec.terms_at(level):
                lines.append(_optimize_statement(term))
    lines.append("")
    lines.append("#show selected/1.")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
