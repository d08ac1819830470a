"""treerules: rule-set explanations for binary decision-tree ensembles.

Pipeline: train or load an ensemble, decompose it into candidate rules
scored on a dataset, select a small rule set by constrained lexicographic
optimization (natively or through an exported answer-set program), and
evaluate the resulting explanations.
"""

__version__ = "0.1.0"

from .dataset import (
    CATEGORICAL,
    CONTINUOUS,
    Column,
    DataFormatError,
    Dataset,
    FoldPlan,
    Schema,
    infer_schema,
    load_csv,
    save_csv,
    stratified_kfold,
)
from .ensemble import (
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
    load_ensemble,
    save_ensemble,
    train_decision_tree,
    train_gbdt,
    train_random_forest,
)
from .evaluate import (
    EvalReport,
    RuleBasedClassifier,
    binary_metrics,
    fidelity,
    local_coverage,
    local_precision,
    performance,
    performance_ratio,
    run_crossval,
)
from .explain import (
    GlobalExplanation,
    LocalExplanation,
    explain_global,
    explain_local,
    format_global,
    format_local,
)
from .rules import (
    ALL_NODES,
    LEAF_ONLY,
    CandidateRuleSet,
    ConditionTable,
    Rule,
    RuleMetrics,
    assign_class,
    compute_metrics,
    emit_facts,
    extract_rules,
    load_candidates,
    save_candidates,
)
from .selection import (
    ASP_PARITY,
    EXACT_RATIONAL,
    INFEASIBLE,
    OPTIMAL,
    TIMEOUT_BEST_KNOWN,
    ObjectiveSpec,
    ObjectiveTerm,
    RuleSetSolution,
    SelectionConfig,
    ValidityConfig,
    dominates,
    emit_asp_program,
    filter_valid,
    overlap,
    solve,
)

__all__ = [name for name in dir() if not name.startswith("_")]
