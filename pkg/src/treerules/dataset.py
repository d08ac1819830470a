"""CSV ingestion, feature typing, and deterministic stratified fold planning.

Feature columns are either continuous (stored as float64) or categorical
(values interned to integer codes per column, in first-observed order).
Class labels are indexed by their lexicographic position among the label
strings, which keeps runs reproducible across platforms. Missing cells are
not supported and fail the load.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


class DataFormatError(ValueError):
    """A CSV file or schema sidecar cannot be interpreted."""


def _parse_number(text: str):
    """Return the finite float value of ``text``, or None if it is not one."""
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


@dataclass
class Column:
    name: str
    kind: str
    categories: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise DataFormatError(f"unknown column kind {self.kind!r} for column {self.name!r}")
        self._index = {v: i for i, v in enumerate(self.categories)}

    def code_for(self, value: str, extend: bool = False) -> int:
        code = self._index.get(value)
        if code is None:
            if not extend:
                raise KeyError(value)
            code = len(self.categories)
            self.categories.append(value)
            self._index[value] = code
        return code


@dataclass
class Schema:
    columns: list[Column]
    label_column: str
    class_names: list[str]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataFormatError("duplicate feature column names")
        if self.label_column in names:
            raise DataFormatError(f"label column {self.label_column!r} also listed as a feature")
        if not self.class_names:
            raise DataFormatError("schema has no class names")
        if len(set(self.class_names)) != len(self.class_names):
            raise DataFormatError("duplicate class names")

    @property
    def m(self) -> int:
        return len(self.columns)

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def class_index(self, label: str) -> int:
        try:
            return self.class_names.index(label)
        except ValueError:
            raise DataFormatError(f"unknown label value {label!r}") from None

    def to_json_dict(self) -> dict:
        cols = []
        for c in self.columns:
            entry: dict = {"name": c.name, "kind": c.kind}
            if c.kind == CATEGORICAL:
                entry["categories"] = list(c.categories)
            cols.append(entry)
        return {"label_column": self.label_column, "class_names": list(self.class_names), "columns": cols}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Schema":
        try:
            cols = [
                Column(e["name"], e["kind"], list(e.get("categories", [])))
                for e in doc["columns"]
            ]
            return cls(cols, doc["label_column"], list(doc["class_names"]))
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"malformed schema document: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))

    def fingerprint(self) -> str:
        """Stable hash over feature layout and class names (label name excluded)."""
        doc = {
            "columns": [
                {"name": c.name, "kind": c.kind, "categories": list(c.categories)}
                for c in self.columns
            ],
            "class_names": list(self.class_names),
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass
class Dataset:
    schema: Schema
    x: np.ndarray  # (n, m) float64; categorical columns hold codes
    y: np.ndarray  # (n,) int64 class indices

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).reshape(len(self.y), self.schema.m)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.y.size and (self.y.min() < 0 or self.y.max() >= len(self.schema.class_names)):
            raise DataFormatError("label index out of range")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def m(self) -> int:
        return self.schema.m

    @property
    def n_classes(self) -> int:
        return len(self.schema.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    def majority_class(self) -> int:
        return int(np.argmax(self.class_counts()))

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.schema, self.x[idx], self.y[idx])


def _read_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = list(reader)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataFormatError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
    return header, rows


def infer_schema(path, label: str) -> Schema:
    """Infer a Schema from a CSV file.

    A column is continuous iff every non-empty value parses as a finite
    decimal number; otherwise it is categorical. Class names are the sorted
    distinct label values.
    """
    header, rows = _read_rows(path)
    if label not in header:
        raise DataFormatError(f"{path}: label column {label!r} not in header")
    if len(header) < 2:
        raise DataFormatError(f"{path}: no feature columns besides the label")
    label_pos = header.index(label)

    numeric = [True] * len(header)
    observed: list[dict] = [dict() for _ in header]  # insertion-ordered vocabularies
    labels = set()
    for row in rows:
        for j, cell in enumerate(row):
            if j == label_pos:
                if cell:
                    labels.add(cell)
                continue
            if not cell:
                continue
            if numeric[j] and _parse_number(cell) is None:
                numeric[j] = False
            observed[j].setdefault(cell, None)

    columns = []
    for j, name in enumerate(header):
        if j == label_pos:
            continue
        if numeric[j]:
            columns.append(Column(name, CONTINUOUS))
        else:
            columns.append(Column(name, CATEGORICAL, list(observed[j])))
    return Schema(columns, label, sorted(labels))


def load_csv(path, schema: Schema) -> Dataset:
    """Materialize a CSV file under ``schema``.

    Unseen categorical values extend the (copied) schema's vocabulary;
    unknown labels, unparseable continuous values, and missing cells are
    errors. The caller's schema object is never mutated.
    """
    header, rows = _read_rows(path)
    expected = list(schema.feature_names) + [schema.label_column]
    if sorted(header) != sorted(expected):
        raise DataFormatError(f"{path}: header {header} does not match schema columns {expected}")
    schema = copy.deepcopy(schema)
    label_pos = header.index(schema.label_column)
    col_pos = [header.index(c.name) for c in schema.columns]

    n, m = len(rows), schema.m
    x = np.empty((n, m), dtype=np.float64)
    y = np.empty(n, dtype=np.int64)
    for i, row in enumerate(rows):
        label = row[label_pos]
        if not label:
            raise DataFormatError(f"{path}: row {i + 2}: missing label")
        y[i] = schema.class_index(label)
        for j, col in enumerate(schema.columns):
            cell = row[col_pos[j]]
            if not cell:
                raise DataFormatError(f"{path}: row {i + 2}: missing value in column {col.name!r}")
            if col.kind == CONTINUOUS:
                value = _parse_number(cell)
                if value is None:
                    raise DataFormatError(
                        f"{path}: row {i + 2}: {cell!r} is not numeric (column {col.name!r})"
                    )
                x[i, j] = value
            else:
                x[i, j] = col.code_for(cell, extend=True)
    return Dataset(schema, x, y)


def save_csv(data: Dataset, path) -> None:
    """Write a Dataset back to CSV (features first, label last)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.schema.feature_names + [data.schema.label_column])
        for i in range(data.n):
            row = []
            for j, col in enumerate(data.schema.columns):
                v = data.x[i, j]
                row.append(repr(float(v)) if col.kind == CONTINUOUS else col.categories[int(v)])
            row.append(data.schema.class_names[int(data.y[i])])
            writer.writerow(row)


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray  # (n,) fold index per row
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_kfold(data: Dataset, k: int, seed: int) -> FoldPlan:
    """Deterministic stratified fold assignment.

    Each class's rows are shuffled with a seed-derived generator and dealt
    round-robin, rotating the starting fold between classes so remainders
    spread evenly. Per-fold class counts are within one row of n_c / k.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    counts = data.class_counts()
    for c, cnt in enumerate(counts):
        if cnt < k:
            raise ValueError(
                f"class {data.schema.class_names[c]!r} has {int(cnt)} rows, fewer than k={k}"
            )
    rng = np.random.default_rng(seed)
    assignments = np.empty(data.n, dtype=np.int64)
    start = 0
    for c in range(data.n_classes):
        idx = np.flatnonzero(data.y == c)
        perm = rng.permutation(idx)
        for j, row in enumerate(perm):
            assignments[row] = (j + start) % k
        start = (start + len(idx)) % k
    return FoldPlan(k, assignments, seed)
