"""Command-line front end: reproducible batch runs of the pipeline.

Every command is a pure function of its input files and configuration:
outputs land under ``<outdir>/<run-id>/`` where the run id is a hash of the
effective configuration, and a manifest records the config, seeds, and
versions. Config files are YAML; command-line flags override config keys.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .dataset import Dataset, Schema, infer_schema, load_csv
from .ensemble import Ensemble, load_ensemble, save_ensemble
from .evaluate import (
    ORDER_GIVEN,
    ORDER_PRECISION,
    RuleBasedClassifier,
    binary_metrics,
    eval_report_to_doc,
    evaluate_split,
    fidelity,
    format_eval_report,
    performance,
    run_crossval,
)
from .explain import (
    explain_global,
    explain_local,
    format_global,
    format_local,
    global_to_doc,
    local_to_doc,
)
from .rules import (
    ALL_NODES,
    LEAF_ONLY,
    ConditionTable,
    Rule,
    RuleMetrics,
    emit_facts,
    extract_rules,
    load_candidates,
    save_candidates,
)
from .selection import (
    OBJECTIVE_PRESETS,
    SelectionConfig,
    ValidityConfig,
    emit_asp_program,
    filter_valid,
    solve,
)


class CliError(Exception):
    """Carries one or more machine-parseable error lines."""

    def __init__(self, *lines: str):
        super().__init__("; ".join(lines))
        self.lines = list(lines)


# ---------------------------------------------------------------------------
# Configuration

DEFAULT_CONFIG = {
    "dataset": {"path": None, "label": None, "schema": None},
    "trainer": {
        "kind": "forest",
        "max_depth": 5,
        "min_leaf": 1,
        "n_trees": 100,
        "feature_fraction": 0.7,
        "bootstrap": True,
        "n_rounds": 50,
        "learning_rate": 0.1,
    },
    "extraction": {"mode": LEAF_ONLY},
    "validity": {
        "max_size": None,
        "max_error_rate": None,
        "min_precision": None,
        "min_recall": None,
        "min_support": None,
        "min_accuracy": None,
        "min_f1": None,
    },
    "selection": {
        "max_rules_per_class": 3,
        "min_rules_per_class": 1,
        "dominance": "off",
        "dominance_scope": "same_class",
        "max_total_conditions": None,
        "arithmetic": "asp_parity",
        "minimize_overlap": False,
        "budget_seconds": None,
    },
    "objective": {"preset": "accuracy-coverage"},
    "crossval": {"k": 5},
    "evaluate": {"order": ORDER_PRECISION},
    "seed": 0,
    "threads": 1,
    "output": "out",
}

_SCALAR_TYPES = {
    ("dataset", "path"): str, ("dataset", "label"): str, ("dataset", "schema"): str,
    ("trainer", "kind"): str, ("trainer", "max_depth"): int, ("trainer", "min_leaf"): int,
    ("trainer", "n_trees"): int, ("trainer", "feature_fraction"): (int, float),
    ("trainer", "bootstrap"): bool, ("trainer", "n_rounds"): int,
    ("trainer", "learning_rate"): (int, float),
    ("extraction", "mode"): str,
    ("validity", "max_size"): int, ("validity", "max_error_rate"): int,
    ("validity", "min_precision"): int, ("validity", "min_recall"): int,
    ("validity", "min_support"): int, ("validity", "min_accuracy"): int,
    ("validity", "min_f1"): int,
    ("selection", "max_rules_per_class"): int, ("selection", "min_rules_per_class"): int,
    ("selection", "dominance"): str, ("selection", "dominance_scope"): str,
    ("selection", "max_total_conditions"): int, ("selection", "arithmetic"): str,
    ("selection", "minimize_overlap"): bool, ("selection", "budget_seconds"): (int, float),
    ("objective", "preset"): str,
    ("crossval", "k"): int,
    ("evaluate", "order"): str,
    ("seed",): int,
    ("threads",): int,
    ("output",): str,
}


def _validate_config(cfg: dict) -> list[str]:
    errors = []

    def walk(node, template, path):
        for key, value in node.items():
            here = path + (key,)
            dotted = ".".join(here)
            if key not in template:
                errors.append(f"config: {dotted}: unknown key")
                continue
            if isinstance(template[key], dict):
                if not isinstance(value, dict):
                    errors.append(f"config: {dotted}: expected a mapping")
                else:
                    walk(value, template[key], here)
            else:
                expected = _SCALAR_TYPES[here]
                if value is not None and not isinstance(value, expected):
                    errors.append(
                        f"config: {dotted}: expected "
                        f"{getattr(expected, '__name__', expected)}, got {type(value).__name__}"
                    )

    walk(cfg, DEFAULT_CONFIG, ())
    return errors


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh) or {}
        if not isinstance(cfg, dict):
            raise CliError("config: top level must be a mapping")
    errors = _validate_config(cfg)
    if errors:
        raise CliError(*errors)
    merged = _deep_merge(DEFAULT_CONFIG, cfg)
    merged = _deep_merge(merged, overrides)
    return merged


def _flag_overrides(args) -> dict:
    over: dict = {}

    def put(path, value):
        node = over
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value

    mapping = {
        "data": ("dataset", "path"), "label": ("dataset", "label"),
        "schema": ("dataset", "schema"), "trainer": ("trainer", "kind"),
        "mode": ("extraction", "mode"), "preset": ("objective", "preset"),
        "seed": ("seed",), "threads": ("threads",), "outdir": ("output",),
    }
    for attr, path in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            put(path, value)
    return over


def build_selection_config(cfg: dict) -> SelectionConfig:
    preset = cfg["objective"]["preset"]
    if preset not in OBJECTIVE_PRESETS:
        raise CliError(f"config: objective.preset: unknown preset {preset!r} "
                       f"(choose from {', '.join(sorted(OBJECTIVE_PRESETS))})")
    v = cfg["validity"]
    s = cfg["selection"]
    try:
        return SelectionConfig(
            validity=ValidityConfig(**v),
            max_rules_per_class=s["max_rules_per_class"],
            min_rules_per_class=s["min_rules_per_class"],
            dominance=s["dominance"],
            dominance_scope=s["dominance_scope"],
            max_total_conditions=s["max_total_conditions"],
            objective=OBJECTIVE_PRESETS[preset](),
            arithmetic=s["arithmetic"],
            minimize_overlap=s["minimize_overlap"],
        )
    except ValueError as exc:
        raise CliError(f"config: selection: {exc}") from exc


def load_dataset(cfg: dict, schema: Schema | None = None) -> Dataset:
    ds = cfg["dataset"]
    if not ds["path"]:
        raise CliError("config: dataset.path: required")
    if schema is None:
        if ds["schema"]:
            schema = Schema.load(ds["schema"])
        else:
            if not ds["label"]:
                raise CliError("config: dataset.label: required when schema is not given")
            schema = infer_schema(ds["path"], ds["label"])
    return load_csv(ds["path"], schema)


# ---------------------------------------------------------------------------
# Output layout


def _config_hash(command: str, cfg: dict, inputs: dict) -> str:
    payload = {"command": command, "config": cfg, "inputs": inputs}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def prepare_run_dir(command: str, cfg: dict, inputs: dict) -> Path:
    digest = _config_hash(command, cfg, inputs)
    run = Path(cfg["output"]) / digest[:12]
    run.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_hash": digest,
        "config": cfg,
        "inputs": inputs,
        "seed": cfg["seed"],
        "versions": {
            "treerules": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
    }
    with open(run / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return run


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# Instance selection


def parse_instance(spec: str, ens: Ensemble, data: Dataset | None):
    """Row index into the data file, or an inline ``name=value,...`` list."""
    if "=" not in spec:
        if data is None:
            raise CliError("instance: row index requires --data")
        try:
            idx = int(spec)
        except ValueError:
            raise CliError(f"instance: {spec!r} is neither an index nor key=value pairs") from None
        if not 0 <= idx < data.n:
            raise CliError(f"instance: row {idx} out of range (n={data.n})")
        return data.x[idx]
    pairs = {}
    for part in spec.split(","):
        key, _, value = part.partition("=")
        if not _:
            raise CliError(f"instance: malformed segment {part!r}")
        pairs[key.strip()] = value.strip()
    row = np.zeros(len(ens.features))
    seen = set()
    for j, col in enumerate(ens.features):
        if col.name not in pairs:
            raise CliError(f"instance: missing feature {col.name!r}")
        seen.add(col.name)
        raw = pairs[col.name]
        if col.kind == "continuous":
            try:
                row[j] = float(raw)
            except ValueError:
                raise CliError(f"instance: {col.name}={raw!r} is not numeric") from None
        else:
            if raw in col.categories:
                row[j] = col.categories.index(raw)
            else:
                row[j] = len(col.categories)  # unseen category: outside every split set
    extra = set(pairs) - seen
    if extra:
        raise CliError(f"instance: unknown features {sorted(extra)}")
    return row


# ---------------------------------------------------------------------------
# Commands


def cmd_train(args, cfg) -> int:
    data = load_dataset(cfg)
    kind = cfg["trainer"]["kind"]
    t = cfg["trainer"]
    seed = cfg["seed"]
    from .ensemble import train_decision_tree, train_gbdt, train_random_forest

    if kind == "tree":
        ens = train_decision_tree(data, t["max_depth"], t["min_leaf"], seed)
    elif kind == "forest":
        ens = train_random_forest(data, t["n_trees"], t["max_depth"], t["min_leaf"],
                                  t["feature_fraction"], seed, t["bootstrap"])
    elif kind == "gbdt":
        ens = train_gbdt(data, t["n_rounds"], t["max_depth"], t["learning_rate"],
                         t["min_leaf"], seed)
    else:
        raise CliError(f"config: trainer.kind: unknown trainer {kind!r}")
    run = prepare_run_dir("train", cfg, {"data": str(cfg["dataset"]["path"])})
    save_ensemble(ens, run / "model.json")
    print(run / "model.json")
    return 0


def _load_model_and_data(args, cfg) -> tuple[Ensemble, Dataset]:
    ens = load_ensemble(args.model)
    if cfg["dataset"]["schema"]:
        schema = Schema.load(cfg["dataset"]["schema"])
    else:
        if not cfg["dataset"]["label"]:
            raise CliError("config: dataset.label: required to load data with the model's schema")
        schema = ens.to_schema(cfg["dataset"]["label"])
    data = load_dataset(cfg, schema=schema)
    return ens, data


def cmd_extract(args, cfg) -> int:
    ens, data = _load_model_and_data(args, cfg)
    crs = extract_rules(ens, data, cfg["extraction"]["mode"])
    run = prepare_run_dir("extract", cfg, {"model": args.model, "data": cfg["dataset"]["path"]})
    save_candidates(crs, run / "candidates.json")
    _write_text(run / "facts.lp", emit_facts(crs))
    print(run / "candidates.json")
    return 0


def cmd_select(args, cfg) -> int:
    crs = load_candidates(args.candidates)
    sel_cfg = build_selection_config(cfg)
    report = filter_valid(crs, sel_cfg.validity)
    sol = solve(crs, sel_cfg, cfg["selection"]["budget_seconds"])
    run = prepare_run_dir("select", cfg, {"candidates": args.candidates})
    doc = {
        "status": sol.status,
        "selected": sol.selected,
        "objective_vector": [v if isinstance(v, int) else str(v) for v in sol.objective_vector],
        "nodes_explored": sol.stats.nodes,
        "wall_time": sol.stats.wall_time,
        "validity": {
            "total": report.total,
            "valid": len(report.valid_ids),
            "eliminated": report.eliminated,
            "safety_violations": report.safety_violations,
        },
    }
    _write_json(run / "solution.json", doc)
    print(run / "solution.json")
    return 0


def cmd_export_asp(args, cfg) -> int:
    crs = load_candidates(args.candidates)
    sel_cfg = build_selection_config(cfg)
    run = prepare_run_dir("export-asp", cfg, {"candidates": args.candidates})
    emit_asp_program(crs, sel_cfg, run / "program.lp")
    print(run / "program.lp")
    return 0


def _explanation_payload(doc: dict, conditions: ConditionTable) -> dict:
    from .rules import _condition_to_doc

    doc["condition_table"] = [_condition_to_doc(c) for c in conditions.conditions]
    return doc


def cmd_explain_global(args, cfg) -> int:
    ens, data = _load_model_and_data(args, cfg)
    sel_cfg = build_selection_config(cfg)
    expl = explain_global(ens, data, sel_cfg, cfg["extraction"]["mode"],
                          cfg["selection"]["budget_seconds"])
    run = prepare_run_dir("explain-global", cfg, {"model": args.model, "data": cfg["dataset"]["path"]})
    _write_json(run / "explanation.json", _explanation_payload(global_to_doc(expl, ens), expl.conditions))
    _write_text(run / "report.txt", format_global(expl, ens))
    print(run / "explanation.json")
    return 0


def cmd_explain_local(args, cfg) -> int:
    ens, data = _load_model_and_data(args, cfg)
    instance = parse_instance(args.instance, ens, data)
    sel_cfg = None
    if args.use_config_selection:
        sel_cfg = build_selection_config(cfg)
    expl = explain_local(ens, data, instance, sel_cfg, cfg["selection"]["budget_seconds"])
    run = prepare_run_dir("explain-local", cfg, {
        "model": args.model, "data": cfg["dataset"]["path"], "instance": args.instance,
    })
    _write_json(run / "explanation.json", _explanation_payload(local_to_doc(expl, ens), expl.conditions))
    _write_text(run / "report.txt", format_local(expl, ens))
    print(run / "explanation.json")
    return 0


def classifier_from_explanation_doc(doc: dict, default_label: int,
                                    order: str = ORDER_PRECISION) -> RuleBasedClassifier:
    from .rules import _condition_from_doc

    table = ConditionTable([_condition_from_doc(c) for c in doc["condition_table"]])
    rules = []
    for rd in doc["rules"]:
        m = rd["metrics"]
        rule = Rule(rd["id"], frozenset(rd["condition_ids"]), rd["class_index"], (0, 0))
        metrics = RuleMetrics(size=m["size"], support=m["support"], accuracy=m["accuracy"],
                              error_rate=m["error_rate"], precision=m["precision"],
                              recall=m["recall"], f1=m["f1"], confusion=(0, 0, 0, 0))
        rules.append((rule, metrics))
    return RuleBasedClassifier.from_rules(rules, table, default_label, order)


def cmd_evaluate(args, cfg) -> int:
    ens, data = _load_model_and_data(args, cfg)
    with open(args.explanation, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    clf = classifier_from_explanation_doc(doc, data.majority_class(), cfg["evaluate"]["order"])
    ruleset = performance(clf, data)
    model = binary_metrics(data.y, ens.predict_all(data.x))
    ratio = {k: (ruleset[k] / model[k] if model[k] else None) for k in ruleset}
    fid = fidelity(clf, ens, data)
    out = {"ruleset": ruleset, "model": model, "ratio": ratio, "fidelity": fid,
           "n_rules": len(clf.rules),
           "total_conditions": sum(m.size for _, m in clf.rules)}
    run = prepare_run_dir("evaluate", cfg, {
        "model": args.model, "explanation": args.explanation, "data": cfg["dataset"]["path"],
    })
    _write_json(run / "eval.json", out)
    lines = [f"{'metric':<12}{'ruleset':>10}{'model':>10}{'ratio':>10}{'fidelity':>10}"]
    for name in ("accuracy", "precision", "recall", "f1"):
        r = ratio[name]
        lines.append(f"{name:<12}{ruleset[name]:>10.4f}{model[name]:>10.4f}"
                     f"{'null' if r is None else format(r, '.4f'):>10}{fid[name]:>10.4f}")
    _write_text(run / "eval.txt", "\n".join(lines) + "\n")
    print(run / "eval.json")
    return 0


def cmd_crossval(args, cfg) -> int:
    data = load_dataset(cfg)
    sel_cfg = build_selection_config(cfg)
    kind = cfg["trainer"]["kind"]
    t = cfg["trainer"]
    params = {
        "tree": {"max_depth": t["max_depth"], "min_leaf": t["min_leaf"]},
        "forest": {"n_trees": t["n_trees"], "max_depth": t["max_depth"],
                   "min_leaf": t["min_leaf"], "feature_fraction": t["feature_fraction"],
                   "bootstrap": t["bootstrap"]},
        "gbdt": {"n_rounds": t["n_rounds"], "max_depth": t["max_depth"],
                 "learning_rate": t["learning_rate"], "min_leaf": t["min_leaf"]},
    }.get(kind)
    if params is None:
        raise CliError(f"config: trainer.kind: unknown trainer {kind!r}")
    report = run_crossval(data, kind, params, sel_cfg, cfg["crossval"]["k"], cfg["seed"],
                          cfg["extraction"]["mode"], cfg["evaluate"]["order"],
                          cfg["selection"]["budget_seconds"])
    run = prepare_run_dir("crossval", cfg, {"data": cfg["dataset"]["path"]})
    _write_json(run / "eval.json", eval_report_to_doc(report))
    _write_text(run / "eval.txt", format_eval_report(report))
    print(run / "eval.json")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treerules",
                                     description="rule-set explanations for tree ensembles")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--outdir", help="output directory (default from config)")
        p.add_argument("--seed", type=int, help="seed for all stochastic components")
        p.add_argument("--threads", type=int, help="worker cap")

    p = sub.add_parser("train", help="train a tree, forest, or boosted ensemble")
    common(p)
    p.add_argument("--data", help="training CSV")
    p.add_argument("--label", help="label column name")
    p.add_argument("--schema", help="schema sidecar JSON")
    p.add_argument("--trainer", choices=["tree", "forest", "gbdt"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="decompose a model into candidate rules")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", help="scoring CSV (metrics are computed on it)")
    p.add_argument("--label")
    p.add_argument("--schema")
    p.add_argument("--mode", choices=[LEAF_ONLY, ALL_NODES])
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("select", help="solve rule-set selection over candidates")
    common(p)
    p.add_argument("--candidates", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("export-asp", help="emit the answer-set program for candidates")
    common(p)
    p.add_argument("--candidates", required=True)
    p.set_defaults(func=cmd_export_asp)

    p = sub.add_parser("explain-global", help="global explanation for a model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data")
    p.add_argument("--label")
    p.add_argument("--schema")
    p.add_argument("--mode", choices=[LEAF_ONLY, ALL_NODES])
    p.set_defaults(func=cmd_explain_global)

    p = sub.add_parser("explain-local", help="local explanation for one instance")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data")
    p.add_argument("--label")
    p.add_argument("--schema")
    p.add_argument("--instance", required=True, help="row index or key=value,...")
    p.add_argument("--use-config-selection", action="store_true",
                   help="use the config selection block instead of local defaults")
    p.set_defaults(func=cmd_explain_local)

    p = sub.add_parser("evaluate", help="score an explanation against a model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--explanation", required=True)
    p.add_argument("--data")
    p.add_argument("--label")
    p.add_argument("--schema")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", help="k-fold train/extract/select/evaluate")
    common(p)
    p.add_argument("--data")
    p.add_argument("--label")
    p.add_argument("--schema")
    p.add_argument("--trainer", choices=["tree", "forest", "gbdt"])
    p.set_defaults(func=cmd_crossval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _flag_overrides(args))
        return args.func(args, cfg)
    except CliError as exc:
        for line in exc.lines:
            print(f"error: {line}", file=sys.stderr)
        return 2
    except Exception as exc:  # input errors become one parseable line
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
