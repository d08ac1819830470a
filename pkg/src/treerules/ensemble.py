"""Binary-split decision-tree ensembles: types, trainers, prediction, and I/O.

Conventions used throughout:
  * the left child is taken when a node's condition evaluates true;
  * continuous splits are ``value <= threshold`` (boundary goes left);
  * categorical splits are ``value in {codes}``;
  * majority-vote ties resolve to the lowest class index;
  * score-sum ensembles are binary, class 1 iff the logistic of the summed
    score is >= 0.5 (raw score >= 0).

Trainers are exact greedy CART (no binning) so results are deterministic;
ties in split gain break toward the lowest feature index, then the lowest
threshold.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .dataset import CATEGORICAL, CONTINUOUS, Column, Dataset, Schema

LE = "le"
GT = "gt"
IN = "in"
NOT_IN = "not_in"

VOTE = "vote"
SCORE_SUM = "score_sum"

_NEGATION = {LE: GT, GT: LE, IN: NOT_IN, NOT_IN: IN}


class ModelFormatError(ValueError):
    """An interchange document is malformed."""


class SchemaMismatchError(ValueError):
    """Instance or dataset does not conform to the ensemble's schema."""


@dataclass(frozen=True)
class SplitCondition:
    feature: int
    op: str
    threshold: float | None = None
    values: frozenset[int] | None = None

    def __post_init__(self):
        if self.op in (LE, GT):
            if self.threshold is None or not math.isfinite(self.threshold):
                raise ValueError(f"{self.op} condition needs a finite threshold")
            object.__setattr__(self, "threshold", float(self.threshold))
            if self.values is not None:
                raise ValueError("threshold conditions carry no value set")
        elif self.op in (IN, NOT_IN):
            if not self.values:
                raise ValueError(f"{self.op} condition needs a nonempty value set")
            object.__setattr__(self, "values", frozenset(int(v) for v in self.values))
            if self.threshold is not None:
                raise ValueError("set conditions carry no threshold")
        else:
            raise ValueError(f"unknown condition op {self.op!r}")

    def negate(self) -> "SplitCondition":
        return SplitCondition(self.feature, _NEGATION[self.op], self.threshold, self.values)

    def holds(self, row) -> bool:
        v = row[self.feature]
        if self.op == LE:
            return v <= self.threshold
        if self.op == GT:
            return v > self.threshold
        inside = int(v) in self.values
        return inside if self.op == IN else not inside

    def mask(self, x: np.ndarray) -> np.ndarray:
        col = x[:, self.feature]
        if self.op == LE:
            return col <= self.threshold
        if self.op == GT:
            return col > self.threshold
        inside = np.isin(col.astype(np.int64), sorted(self.values))
        return inside if self.op == IN else ~inside

    def key(self) -> tuple:
        """Dedup key; thresholds compare by exact bit pattern."""
        if self.op in (LE, GT):
            return (self.feature, self.op, struct.pack("<d", self.threshold))
        return (self.feature, self.op, tuple(sorted(self.values)))

    def render(self, features: list[Column]) -> str:
        col = features[self.feature]
        if self.op == LE:
            return f"{col.name} <= {self.threshold:g}"
        if self.op == GT:
            return f"{col.name} > {self.threshold:g}"
        names = ", ".join(col.categories[c] for c in sorted(self.values))
        word = "in" if self.op == IN else "not in"
        return f"{col.name} {word} {{{names}}}"


@dataclass
class Node:
    id: int
    condition: SplitCondition | None = None
    left: int | None = None
    right: int | None = None
    class_counts: np.ndarray | None = None
    value: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.condition is None


@dataclass
class Tree:
    nodes: dict[int, Node]
    root: int

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def leaf_count(self) -> int:
        return sum(1 for n in self.nodes.values() if n.is_leaf)

    @property
    def depth(self) -> int:
        best = 0
        stack = [(self.root, 0)]
        while stack:
            nid, d = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                best = max(best, d)
            else:
                stack.append((node.left, d + 1))
                stack.append((node.right, d + 1))
        return best

    @property
    def is_stump(self) -> bool:
        return self.nodes[self.root].is_leaf

    def route(self, row) -> int:
        node = self.nodes[self.root]
        while not node.is_leaf:
            node = self.nodes[node.left if node.condition.holds(row) else node.right]
        return node.id

    def route_with_conditions(self, row) -> tuple[int, list[SplitCondition]]:
        """Active leaf id plus the conditions satisfied along the way."""
        node = self.nodes[self.root]
        conds = []
        while not node.is_leaf:
            if node.condition.holds(row):
                conds.append(node.condition)
                node = self.nodes[node.left]
            else:
                conds.append(node.condition.negate())
                node = self.nodes[node.right]
        return node.id, conds

    def route_all(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0], dtype=np.int64)
        stack = [(self.root, np.arange(x.shape[0]))]
        while stack:
            nid, idx = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                out[idx] = nid
                continue
            hold = node.condition.mask(x[idx])
            stack.append((node.left, idx[hold]))
            stack.append((node.right, idx[~hold]))
        return out

    def iter_paths(self):
        """Yield (node_id, path conditions, is_leaf) in preorder, left first.

        The right branch carries the negated parent condition, so a path is
        the exact conjunction routing an instance to that node.
        """
        stack = [(self.root, [])]
        while stack:
            nid, conds = stack.pop()
            node = self.nodes[nid]
            yield nid, conds, node.is_leaf
            if not node.is_leaf:
                stack.append((node.right, conds + [node.condition.negate()]))
                stack.append((node.left, conds + [node.condition]))

    def validate(self, n_classes: int, features: list[Column]) -> None:
        if self.root not in self.nodes:
            raise ModelFormatError(f"root node {self.root} missing")
        seen = set()
        stack = [self.root]
        while stack:
            nid = stack.pop()
            if nid in seen:
                raise ModelFormatError(f"node {nid} reachable twice (cycle or shared child)")
            seen.add(nid)
            node = self.nodes.get(nid)
            if node is None:
                raise ModelFormatError(f"dangling child id {nid}")
            if node.is_leaf:
                if node.class_counts is None or len(node.class_counts) != n_classes:
                    raise ModelFormatError(f"leaf {nid} needs {n_classes} class counts")
                continue
            if node.left is None or node.right is None:
                raise ModelFormatError(f"internal node {nid} lacks two children")
            cond = node.condition
            if not 0 <= cond.feature < len(features):
                raise ModelFormatError(f"node {nid} references feature {cond.feature}")
            col = features[cond.feature]
            if cond.op == LE and col.kind != CONTINUOUS:
                raise ModelFormatError(f"node {nid}: threshold split on categorical {col.name!r}")
            if cond.op == IN:
                if col.kind != CATEGORICAL:
                    raise ModelFormatError(f"node {nid}: set split on continuous {col.name!r}")
                vocab = range(len(col.categories))
                if not all(v in vocab for v in cond.values):
                    raise ModelFormatError(f"node {nid}: split values outside vocabulary of {col.name!r}")
            stack.extend((node.left, node.right))
        if seen != set(self.nodes):
            raise ModelFormatError(f"unreachable nodes: {sorted(set(self.nodes) - seen)}")


@dataclass
class Ensemble:
    trees: list[Tree]
    aggregation: str
    classes: list[str]
    features: list[Column]
    base_score: float = 0.0

    def __post_init__(self):
        if self.aggregation not in (VOTE, SCORE_SUM):
            raise ModelFormatError(f"unknown aggregation tag {self.aggregation!r}")
        if not self.trees:
            raise ModelFormatError("ensemble needs at least one tree")
        if self.aggregation == SCORE_SUM and len(self.classes) != 2:
            raise ModelFormatError("score-sum ensembles are binary only")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def is_stump(self) -> bool:
        return all(t.is_stump for t in self.trees)

    def schema_fingerprint(self) -> str:
        doc = {
            "columns": [
                {"name": c.name, "kind": c.kind, "categories": list(c.categories)}
                for c in self.features
            ],
            "class_names": list(self.classes),
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def fingerprint(self) -> str:
        """Stable hash of the whole model (trees, payloads, schema)."""
        blob = json.dumps(ensemble_to_doc(self), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def check_compatible(self, schema: Schema) -> None:
        """Accept schemas whose categorical vocabularies extend the trained ones."""
        if schema.class_names != self.classes:
            raise SchemaMismatchError("class names differ from the trained schema")
        if len(schema.columns) != len(self.features):
            raise SchemaMismatchError("feature count differs from the trained schema")
        for mine, theirs in zip(self.features, schema.columns):
            if mine.name != theirs.name or mine.kind != theirs.kind:
                raise SchemaMismatchError(f"feature {theirs.name!r} differs from the trained schema")
            if mine.kind == CATEGORICAL and theirs.categories[: len(mine.categories)] != mine.categories:
                raise SchemaMismatchError(f"categories of {mine.name!r} do not extend the trained ones")

    def to_schema(self, label_column: str = "label") -> Schema:
        """Schema for loading data compatible with this ensemble."""
        cols = [Column(c.name, c.kind, list(c.categories)) for c in self.features]
        return Schema(cols, label_column, list(self.classes))

    def _check_row(self, row) -> None:
        if len(row) != len(self.features):
            raise SchemaMismatchError(f"instance has {len(row)} values, expected {len(self.features)}")

    def raw_score(self, row) -> float:
        total = self.base_score
        for tree in self.trees:
            total += tree.nodes[tree.route(row)].value
        return total

    def predict_proba(self, row) -> float:
        """Probability of class 1 (score-sum ensembles only)."""
        if self.aggregation != SCORE_SUM:
            raise ValueError("probabilities are defined for score-sum ensembles")
        raw = self.raw_score(row)
        if raw >= 0:
            return 1.0 / (1.0 + math.exp(-raw))
        e = math.exp(raw)
        return e / (1.0 + e)

    def predict(self, row) -> int:
        self._check_row(row)
        if self.aggregation == VOTE:
            votes = np.zeros(self.n_classes, dtype=np.int64)
            for tree in self.trees:
                leaf = tree.nodes[tree.route(row)]
                votes[int(np.argmax(leaf.class_counts))] += 1
            return int(np.argmax(votes))
        return 1 if self.raw_score(row) >= 0 else 0

    def predict_all(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1] != len(self.features):
            raise SchemaMismatchError(f"matrix has {x.shape[1]} columns, expected {len(self.features)}")
        if self.aggregation == VOTE:
            votes = np.zeros((x.shape[0], self.n_classes), dtype=np.int64)
            for tree in self.trees:
                leaves = tree.route_all(x)
                winner = {nid: int(np.argmax(n.class_counts)) for nid, n in tree.nodes.items() if n.is_leaf}
                tree_votes = np.array([winner[nid] for nid in leaves.tolist()])
                for c in range(self.n_classes):
                    votes[:, c] += tree_votes == c
            return np.argmax(votes, axis=1)
        raw = np.full(x.shape[0], self.base_score)
        for tree in self.trees:
            leaves = tree.route_all(x)
            val = {nid: n.value for nid, n in tree.nodes.items() if n.is_leaf}
            raw += np.array([val[nid] for nid in leaves.tolist()])
        return (raw >= 0).astype(np.int64)

    def active_leaves(self, row) -> list[tuple[int, int]]:
        """The unique (tree index, leaf id) the instance reaches in each tree."""
        self._check_row(row)
        return [(k, tree.route(row)) for k, tree in enumerate(self.trees)]


# ---------------------------------------------------------------------------
# Training


def _split_candidates_numeric(col, target, min_leaf):
    """Best <=-threshold split of a numeric column.

    ``target`` is (n,2) of per-row [class-0 weight, class-1 weight] for Gini,
    or (n,2) of [value, 1] for variance reduction; both reduce to maximizing
    sum(prefix)^2/n_L + sum(suffix)^2/n_R style scores.
    """
    order = np.argsort(col, kind="stable")
    v = col[order]
    distinct = np.flatnonzero(v[:-1] < v[1:])  # split after position i
    if distinct.size == 0:
        return None
    n = col.shape[0]
    sizes = distinct + 1
    ok = (sizes >= min_leaf) & (n - sizes >= min_leaf)
    if not ok.any():
        return None
    distinct, sizes = distinct[ok], sizes[ok]
    t = target[order]
    pref = np.cumsum(t, axis=0)
    total = pref[-1]
    left = pref[distinct]
    right = total - left
    score = _score(left, sizes) + _score(right, n - sizes)
    best = int(np.argmax(score))  # first max = lowest threshold
    thr = (v[distinct[best]] + v[distinct[best] + 1]) / 2.0
    return float(score[best]), float(thr)


def _score(sums, n):
    """sum of squared group sums over group size (larger = purer children)."""
    return (sums ** 2).sum(axis=-1) / n


def _split_candidates_categorical(col, target, min_leaf):
    """Best in-subset split of a categorical column (codes).

    Categories are ordered by mean of the second target column (the class-1
    share for Gini, the target mean for regression); prefix subsets of that
    order contain the optimum for binary targets.
    """
    codes = col.astype(np.int64)
    cats = np.unique(codes)
    if cats.size < 2:
        return None
    sums = np.zeros((cats.size, target.shape[1]))
    counts = np.zeros(cats.size)
    pos = np.searchsorted(cats, codes)
    np.add.at(sums, pos, target)
    np.add.at(counts, pos, 1.0)
    rate = sums[:, -1] / counts
    order = np.lexsort((cats, rate))  # rate ascending, code breaks ties
    sums, counts, cats = sums[order], counts[order], cats[order]
    pref_s = np.cumsum(sums, axis=0)
    pref_n = np.cumsum(counts)
    tot_s, tot_n = pref_s[-1], pref_n[-1]
    sizes = pref_n[:-1]
    ok = (sizes >= min_leaf) & (tot_n - sizes >= min_leaf)
    if not ok.any():
        return None
    left = pref_s[:-1][ok]
    sizes = sizes[ok]
    score = _score(left, sizes) + _score(tot_s - left, tot_n - sizes)
    best = int(np.argmax(score))
    cut = np.flatnonzero(ok)[best] + 1
    subset = frozenset(int(c) for c in cats[:cut])
    return float(score[best]), subset


class _Builder:
    """Greedy exact CART builder shared by the classifiers and the regressor."""

    def __init__(self, x, kinds, target, max_depth, min_leaf, rng=None, feature_fraction=1.0,
                 leaf_payload=None):
        self.x = x
        self.kinds = kinds
        self.target = target  # (n, 2) one-hot labels, or (n, 1) regression targets
        self.max_depth = max_depth
        self.min_leaf = max(1, int(min_leaf))
        self.rng = rng
        self.feature_fraction = feature_fraction
        self.leaf_payload = leaf_payload
        self.nodes: dict[int, Node] = {}
        self._next = 0

    def build(self, idx) -> Tree:
        root = self._grow(idx, 0)
        return Tree(self.nodes, root)

    def _new_id(self) -> int:
        nid = self._next
        self._next += 1
        return nid

    def _leaf(self, idx) -> int:
        nid = self._new_id()
        counts, value = self.leaf_payload(idx)
        self.nodes[nid] = Node(nid, class_counts=counts, value=value)
        return nid

    def _features_for_node(self, m):
        if self.feature_fraction >= 1.0 or self.rng is None:
            return range(m)
        k = max(1, int(round(self.feature_fraction * m)))
        if k >= m:
            return range(m)
        return sorted(self.rng.choice(m, size=k, replace=False).tolist())

    def _grow(self, idx, depth) -> int:
        t = self.target[idx]
        pure = np.all(t == t[0])
        if pure or depth >= self.max_depth or idx.size < 2 * self.min_leaf:
            return self._leaf(idx)
        parent_score = _score(t.sum(axis=0), idx.size)
        best = None  # (score, feature, payload)
        for j in self._features_for_node(self.x.shape[1]):
            col = self.x[idx, j]
            if self.kinds[j] == CONTINUOUS:
                cand = _split_candidates_numeric(col, t, self.min_leaf)
            else:
                cand = _split_candidates_categorical(col, t, self.min_leaf)
            if cand is None:
                continue
            score, payload = cand
            # gains below float noise of the cumulative sums are not splits
            if score <= parent_score + 1e-7:
                continue
            if best is None or score > best[0]:
                best = (score, j, payload)
        if best is None:
            return self._leaf(idx)
        _, j, payload = best
        if self.kinds[j] == CONTINUOUS:
            cond = SplitCondition(j, LE, threshold=payload)
        else:
            cond = SplitCondition(j, IN, values=payload)
        hold = cond.mask(self.x[idx])
        nid = self._new_id()
        self.nodes[nid] = Node(nid, condition=cond)
        self.nodes[nid].left = self._grow(idx[hold], depth + 1)
        self.nodes[nid].right = self._grow(idx[~hold], depth + 1)
        return nid


def _check_trainable(data: Dataset) -> None:
    # single-class data is allowed and yields root-only leaf trees
    if data.n < 2:
        raise ValueError("training needs at least two rows")
    if data.n_classes != 2:
        raise ValueError("trainers support binary classification only")


def _one_hot(y):
    t = np.zeros((y.shape[0], 2))
    t[np.arange(y.shape[0]), y] = 1.0
    return t


def _class_leaf_payload(y, n_classes):
    def payload(idx):
        return np.bincount(y[idx], minlength=n_classes), None

    return payload


def train_decision_tree(data: Dataset, max_depth: int = 5, min_leaf: int = 1, seed: int = 0) -> Ensemble:
    """Single Gini tree wrapped as a one-tree majority-vote ensemble."""
    _check_trainable(data)
    kinds = [c.kind for c in data.schema.columns]
    builder = _Builder(
        data.x, kinds, _one_hot(data.y), max_depth, min_leaf,
        leaf_payload=_class_leaf_payload(data.y, data.n_classes),
    )
    tree = builder.build(np.arange(data.n))
    return Ensemble([tree], VOTE, list(data.schema.class_names), _copy_columns(data.schema))


def train_random_forest(data: Dataset, n_trees: int = 100, max_depth: int = 5, min_leaf: int = 1,
                        feature_fraction: float = 0.7, seed: int = 0, bootstrap: bool = True) -> Ensemble:
    """Bootstrap-sampled Gini trees with per-split feature subsampling.

    Per-tree randomness comes from (seed, tree index), so tree t is the same
    no matter how many trees are trained or in what order.
    """
    _check_trainable(data)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    kinds = [c.kind for c in data.schema.columns]
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        idx = rng.integers(0, data.n, size=data.n) if bootstrap else np.arange(data.n)
        builder = _Builder(
            data.x, kinds, _one_hot(data.y), max_depth, min_leaf, rng=rng,
            feature_fraction=feature_fraction,
            leaf_payload=_class_leaf_payload(data.y, data.n_classes),
        )
        trees.append(builder.build(np.sort(idx)))
    return Ensemble(trees, VOTE, list(data.schema.class_names), _copy_columns(data.schema))


def train_gbdt(data: Dataset, n_rounds: int = 50, max_depth: int = 3, learning_rate: float = 0.1,
               min_leaf: int = 1, seed: int = 0) -> Ensemble:
    """Logistic-loss gradient boosting; one regression tree per round.

    Leaf values are shrunk Newton steps (sum of residuals over sum of
    hessians); leaves also carry label counts of the rows they cover so the
    rule machinery treats boosted trees like voting trees.
    """
    _check_trainable(data)
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    kinds = [c.kind for c in data.schema.columns]
    y = data.y.astype(np.float64)
    p0 = min(max(float(y.mean()), 1e-6), 1 - 1e-6)
    base = math.log(p0 / (1 - p0))
    raw = np.full(data.n, base)
    trees = []
    all_idx = np.arange(data.n)
    for _ in range(n_rounds):
        p = 1.0 / (1.0 + np.exp(-np.clip(raw, -500, 500)))
        grad = y - p
        hess = p * (1.0 - p)

        def payload(idx):
            h = hess[idx].sum()
            value = learning_rate * float(grad[idx].sum() / h) if h > 0 else 0.0
            return np.bincount(data.y[idx], minlength=2), value

        builder = _Builder(
            data.x, kinds, grad.reshape(-1, 1), max_depth, min_leaf, leaf_payload=payload,
        )
        tree = builder.build(all_idx)
        trees.append(tree)
        leaves = tree.route_all(data.x)
        raw += np.array([tree.nodes[nid].value for nid in leaves.tolist()])
    return Ensemble(trees, SCORE_SUM, list(data.schema.class_names), _copy_columns(data.schema),
                    base_score=base)


def _copy_columns(schema: Schema) -> list[Column]:
    return [Column(c.name, c.kind, list(c.categories)) for c in schema.columns]


def logistic_loss(ens: Ensemble, data: Dataset) -> float:
    """Mean logistic loss of a score-sum ensemble on a dataset."""
    raw = np.array([ens.raw_score(row) for row in data.x])
    z = np.clip(raw, -500, 500)
    return float(np.mean(np.log1p(np.exp(-z)) + (1 - data.y) * z))


# ---------------------------------------------------------------------------
# Interchange format


def ensemble_to_doc(ens: Ensemble) -> dict:
    features = []
    for col in ens.features:
        entry = {"name": col.name, "kind": col.kind}
        if col.kind == CATEGORICAL:
            entry["categories"] = list(col.categories)
        features.append(entry)
    trees = []
    for tree in ens.trees:
        nodes = []
        for nid in sorted(tree.nodes):
            node = tree.nodes[nid]
            if node.is_leaf:
                entry = {"id": nid, "leaf": True, "counts": [int(c) for c in node.class_counts]}
                if node.value is not None:
                    entry["value"] = float(node.value)
            else:
                cond = node.condition
                entry = {"id": nid, "leaf": False, "feature": cond.feature, "op": cond.op}
                if cond.op == LE:
                    entry["threshold"] = cond.threshold
                else:
                    entry["values"] = sorted(cond.values)
                entry["left"] = node.left
                entry["right"] = node.right
            nodes.append(entry)
        trees.append({"nodes": nodes, "root": tree.root})
    return {
        "format_version": 1,
        "aggregation": ens.aggregation,
        "n_classes": ens.n_classes,
        "base_score": float(ens.base_score),
        "classes": list(ens.classes),
        "features": features,
        "trees": trees,
    }


def ensemble_from_doc(doc: dict) -> Ensemble:
    try:
        if doc["format_version"] != 1:
            raise ModelFormatError(f"unsupported format_version {doc['format_version']!r}")
        aggregation = doc["aggregation"]
        classes = list(doc["classes"])
        features = [
            Column(f["name"], f["kind"], list(f.get("categories", [])))
            for f in doc["features"]
        ]
        n_classes = int(doc["n_classes"])
        if n_classes != len(classes):
            raise ModelFormatError("n_classes does not match the class list")
        trees = []
        for td in doc["trees"]:
            nodes = {}
            for nd in td["nodes"]:
                nid = int(nd["id"])
                if nid in nodes:
                    raise ModelFormatError(f"duplicate node id {nid}")
                if nd["leaf"]:
                    value = float(nd["value"]) if "value" in nd else None
                    if aggregation == SCORE_SUM and value is None:
                        raise ModelFormatError(f"leaf {nid} lacks a score value")
                    nodes[nid] = Node(nid, class_counts=np.asarray(nd["counts"], dtype=np.int64),
                                      value=value)
                else:
                    op = nd["op"]
                    if op not in (LE, IN):
                        raise ModelFormatError(f"op {op!r} is not serializable (only le/in appear in files)")
                    cond = SplitCondition(
                        int(nd["feature"]), op,
                        threshold=nd.get("threshold"),
                        values=frozenset(nd["values"]) if op == IN else None,
                    )
                    nodes[nid] = Node(nid, condition=cond, left=int(nd["left"]), right=int(nd["right"]))
            tree = Tree(nodes, int(td["root"]))
            tree.validate(n_classes, features)
            trees.append(tree)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed ensemble document: {exc}") from exc
    return Ensemble(trees, aggregation, classes, features, base_score=float(doc.get("base_score", 0.0)))


def save_ensemble(ens: Ensemble, path) -> None:
    """Write the interchange JSON; byte-stable for a fixed ensemble."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ensemble_to_doc(ens), fh, separators=(",", ":"))
        fh.write("\n")


def load_ensemble(path) -> Ensemble:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON: {exc}") from exc
    return ensemble_from_doc(doc)
