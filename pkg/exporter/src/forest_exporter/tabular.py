"""Tiny CSV front end: type features and intern categories to integer codes.

The encoding matches the interchange convention of the consuming library:
a column is continuous iff every non-empty cell parses as a finite decimal,
categorical values are interned in first-observed order, and the code a
string gets is its position in the column's category list. Models meant for
export should be fitted on the matrix this module produces, so that any
native categorical splits are expressed over these codes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


def _number(text: str):
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


@dataclass
class EncodedTable:
    feature_names: list[str]
    kinds: list[str]
    categories: list[list[str]]  # per feature; empty for continuous
    x: np.ndarray
    labels: list[str]
    label_column: str

    @property
    def categorical_indices(self) -> list[int]:
        return [j for j, kind in enumerate(self.kinds) if kind == CATEGORICAL]

    def y_for(self, class_names: list[str]) -> np.ndarray:
        index = {name: i for i, name in enumerate(class_names)}
        try:
            return np.array([index[label] for label in self.labels], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(
                f"label {exc.args[0]!r} does not match any model class {class_names}"
            ) from None


def read_table(path, label: str | None = None) -> EncodedTable:
    """Read a CSV with header; the label column defaults to the last one."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = list(reader)
    if label is None:
        label = header[-1]
    if label not in header:
        raise ValueError(f"{path}: label column {label!r} not in header")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
    label_pos = header.index(label)
    feat_pos = [j for j in range(len(header)) if j != label_pos]

    numeric = [all(_number(row[j]) is not None for row in rows) for j in range(len(header))]
    names, kinds, categories = [], [], []
    for j in feat_pos:
        names.append(header[j])
        kinds.append(CONTINUOUS if numeric[j] else CATEGORICAL)
        categories.append([])
    x = np.empty((len(rows), len(feat_pos)), dtype=np.float64)
    code_maps = [dict() for _ in feat_pos]
    for i, row in enumerate(rows):
        for k, j in enumerate(feat_pos):
            cell = row[j]
            if kinds[k] == CONTINUOUS:
                x[i, k] = _number(cell)
            else:
                code = code_maps[k].get(cell)
                if code is None:
                    code = len(categories[k])
                    categories[k].append(cell)
                    code_maps[k][cell] = code
                x[i, k] = code
    labels = [row[label_pos] for row in rows]
    return EncodedTable(names, kinds, categories, x, labels, label)
