"""Convert fitted scikit-learn models into the tree-ensemble interchange JSON.

Supported sources:
  * kind "forest": DecisionTreeClassifier, RandomForestClassifier
    (majority-vote document, per-leaf class counts from the source trees);
  * kind "boosted": binary HistGradientBoostingClassifier (score-sum
    document; leaf scores and the baseline copied verbatim, leaf class
    counts reconstructed by routing the training table through the exported
    trees, categorical splits emitted as `in` value sets).

Thresholds and scores pass through ``json.dump`` untouched, which writes the
shortest decimal that parses back to the identical float, so repeated
exports are byte-stable and condition deduplication downstream stays exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .tabular import CATEGORICAL, CONTINUOUS, EncodedTable


class ExportError(ValueError):
    """The model cannot be converted."""


@dataclass
class ExportManifest:
    source_library: str
    source_version: str
    model_kind: str
    n_trees: int
    feature_names: list[str]
    class_names: list[str]
    checksum: str

    def to_doc(self) -> dict:
        return {
            "source_library": self.source_library,
            "source_version": self.source_version,
            "model_kind": self.model_kind,
            "n_trees": self.n_trees,
            "feature_names": self.feature_names,
            "class_names": self.class_names,
            "checksum": self.checksum,
        }


def n_trees_to_export(total: int, best_iteration) -> int:
    """Boosters that track a best iteration are truncated to it."""
    if best_iteration is None:
        return total
    best = int(best_iteration)
    if best < 1:
        raise ExportError(f"best_iteration must be positive, got {best}")
    return min(total, best)


def _feature_docs(table: EncodedTable) -> list[dict]:
    docs = []
    for name, kind, cats in zip(table.feature_names, table.kinds, table.categories):
        entry = {"name": name, "kind": kind}
        if kind == CATEGORICAL:
            entry["categories"] = list(cats)
        docs.append(entry)
    return docs


def _write_doc(doc: dict, out_path) -> str:
    blob = json.dumps(doc, separators=(",", ":")) + "\n"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(blob)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _sklearn_version() -> str:
    import sklearn

    return sklearn.__version__


# ---------------------------------------------------------------------------
# Voting forests


def _sk_tree_nodes(tree) -> list[dict]:
    """Flatten one fitted sklearn tree; `value` rows may be normalized, so
    counts are recovered through weighted_n_node_samples."""
    left = tree.children_left
    right = tree.children_right
    value = tree.value
    weights = tree.weighted_n_node_samples
    nodes = []
    for nid in range(tree.node_count):
        if left[nid] == -1:
            row = value[nid][0]
            if not np.isclose(row.sum(), 1.0):
                counts = row
            else:
                counts = row * weights[nid]
            nodes.append({"id": nid, "leaf": True,
                          "counts": [int(c) for c in np.rint(counts)]})
        else:
            nodes.append({
                "id": nid, "leaf": False,
                "feature": int(tree.feature[nid]), "op": "le",
                "threshold": float(tree.threshold[nid]),
                "left": int(left[nid]), "right": int(right[nid]),
            })
    return nodes


def export_decision_forest(model, out_path, table: EncodedTable) -> ExportManifest:
    """Emit a majority-vote document for a fitted tree or bagged forest."""
    if hasattr(model, "estimators_"):
        fitted = list(model.estimators_)
    elif hasattr(model, "tree_"):
        fitted = [model]
    else:
        raise ExportError(f"{type(model).__name__} is not a fitted tree or forest")
    if CATEGORICAL in table.kinds:
        bad = [n for n, k in zip(table.feature_names, table.kinds) if k == CATEGORICAL]
        raise ExportError(f"forest export needs numeric features; encode {bad} before fitting")
    classes = [str(c) for c in model.classes_]
    if any(est.tree_.value.shape[-1] != len(classes) for est in fitted):
        raise ExportError("per-leaf class statistics do not match the class list")
    doc = {
        "format_version": 1,
        "aggregation": "vote",
        "n_classes": len(classes),
        "base_score": 0.0,
        "classes": classes,
        "features": _feature_docs(table),
        "trees": [{"nodes": _sk_tree_nodes(est.tree_), "root": 0} for est in fitted],
    }
    checksum = _write_doc(doc, out_path)
    return ExportManifest("scikit-learn", _sklearn_version(), "forest", len(fitted),
                          list(table.feature_names), classes, checksum)


# ---------------------------------------------------------------------------
# Boosters


def _hgb_feature_order(model, n_features: int) -> tuple[list[int], dict[int, list[int]]]:
    """Predictor-space feature index -> original column, plus per-original-column
    ordinal-to-raw category value maps (the fit path moves categorical columns
    to the front and ordinal-encodes them)."""
    is_cat = np.asarray(getattr(model, "is_categorical_", np.zeros(n_features, dtype=bool)))
    if is_cat is None or not is_cat.any():
        return list(range(n_features)), {}
    cat_idx = np.flatnonzero(is_cat)
    num_idx = np.flatnonzero(~is_cat)
    order = [int(j) for j in cat_idx] + [int(j) for j in num_idx]
    raw_values: dict[int, list[int]] = {}
    preprocessor = getattr(model, "_preprocessor", None)
    if preprocessor is not None:
        encoder = preprocessor.named_transformers_["encoder"]
        for pos, cats in zip(cat_idx, encoder.categories_):
            raw_values[int(pos)] = [int(v) for v in cats]
    else:
        for pos in cat_idx:
            raw_values[int(pos)] = []
    return order, raw_values


def _bitset_members(bitset_row) -> list[int]:
    members = []
    for word_idx, word in enumerate(bitset_row):
        word = int(word)
        for bit in range(32):
            if word & (1 << bit):
                members.append(word_idx * 32 + bit)
    return members


def _hgb_tree_nodes(predictor, order, raw_values, table) -> list[dict]:
    nodes = []
    for nid, node in enumerate(predictor.nodes):
        if node["is_leaf"]:
            nodes.append({"id": nid, "leaf": True, "value": float(node["value"])})
            continue
        feature = order[int(node["feature_idx"])]
        entry = {"id": nid, "leaf": False, "feature": feature}
        if node["is_categorical"]:
            bits = _bitset_members(predictor.raw_left_cat_bitsets[int(node["bitset_idx"])])
            mapping = raw_values.get(feature)
            values = sorted(mapping[b] for b in bits) if mapping else sorted(bits)
            vocab = len(table.categories[feature])
            if any(not 0 <= v < vocab for v in values):
                raise ExportError(
                    f"categorical split values {values} fall outside the vocabulary of "
                    f"{table.feature_names[feature]!r}; fit the model on the encoded table"
                )
            entry.update({"op": "in", "values": values})
        else:
            entry.update({"op": "le", "threshold": float(node["num_threshold"])})
        entry.update({"left": int(node["left"]), "right": int(node["right"])})
        nodes.append(entry)
    return nodes


def _route_tree_doc(nodes: list[dict], x: np.ndarray) -> np.ndarray:
    by_id = {n["id"]: n for n in nodes}
    out = np.empty(x.shape[0], dtype=np.int64)
    for i, row in enumerate(x):
        node = by_id[0]
        while not node["leaf"]:
            v = row[node["feature"]]
            if node["op"] == "le":
                follow_left = v <= node["threshold"]
            else:
                follow_left = int(v) in node["values"]
            node = by_id[node["left"] if follow_left else node["right"]]
        out[i] = node["id"]
    return out


def export_boosted(model, out_path, table: EncodedTable) -> ExportManifest:
    """Emit a score-sum document for a fitted binary gradient booster."""
    predictors = getattr(model, "_predictors", None)
    if not predictors:
        raise ExportError(f"{type(model).__name__} is not a fitted booster")
    classes = [str(c) for c in model.classes_]
    if len(classes) != 2:
        raise ExportError("boosted export supports binary objectives only")
    n_export = n_trees_to_export(len(predictors), getattr(model, "best_iteration", None))
    order, raw_values = _hgb_feature_order(model, len(table.feature_names))
    base_score = float(np.asarray(model._baseline_prediction).ravel()[0])
    y = table.y_for(classes)

    trees = []
    for group in predictors[:n_export]:
        nodes = _hgb_tree_nodes(group[0], order, raw_values, table)
        leaves = _route_tree_doc(nodes, table.x)
        counts = {n["id"]: np.zeros(2, dtype=np.int64) for n in nodes if n["leaf"]}
        for leaf_id, label in zip(leaves.tolist(), y.tolist()):
            counts[leaf_id][label] += 1
        for n in nodes:
            if n["leaf"]:
                value = n.pop("value")
                n["counts"] = [int(c) for c in counts[n["id"]]]
                n["value"] = value  # counts-before-value keys match the consumer's writer
        trees.append({"nodes": nodes, "root": 0})
    doc = {
        "format_version": 1,
        "aggregation": "score_sum",
        "n_classes": 2,
        "base_score": base_score,
        "classes": classes,
        "features": _feature_docs(table),
        "trees": trees,
    }
    checksum = _write_doc(doc, out_path)
    return ExportManifest("scikit-learn", _sklearn_version(), "boosted", n_export,
                          list(table.feature_names), classes, checksum)
