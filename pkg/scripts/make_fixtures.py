#!/usr/bin/env python3
"""Generate the bundled desk-scale dataset and the committed forest fixture.

The dataset mirrors the shape of the classic 699-row breast cytology table:
nine graded 1..10 integer features, 458 benign and 241 malignant rows, with
a monotone class signal plus noise. Rerunning the script reproduces both
files byte for byte.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from treerules.dataset import infer_schema, load_csv, stratified_kfold
from treerules.ensemble import save_ensemble, train_random_forest
from treerules.evaluate import binary_metrics

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "tests" / "data"

FEATURES = [
    "clump_thickness",
    "cell_size_uniformity",
    "cell_shape_uniformity",
    "marginal_adhesion",
    "epithelial_cell_size",
    "bare_nuclei",
    "bland_chromatin",
    "normal_nucleoli",
    "mitoses",
]

N_BENIGN = 458
N_MALIGNANT = 241
FOLD_SEED = 7
FOREST_SEED = 13


def grade(rng, base, spread, n):
    raw = np.rint(base + spread * rng.standard_normal(n))
    return np.clip(raw, 1, 10).astype(int)


def synthesize():
    rng = np.random.default_rng(699)
    rows = []
    # benign: low grades everywhere, occasional mild outliers
    for _ in range(N_BENIGN):
        severity = abs(rng.normal(0.0, 0.9))
        feats = grade(rng, 1.6 + severity, 1.0, len(FEATURES))
        feats[-1] = min(feats[-1], grade(rng, 1.0, 0.6, 1)[0])  # mitoses stay low
        rows.append((feats, "benign"))
    # malignant: high grades with heavier spread and overlap into the benign range
    for _ in range(N_MALIGNANT):
        severity = 3.6 + abs(rng.normal(1.6, 1.6))
        feats = grade(rng, severity, 2.2, len(FEATURES))
        feats[-1] = grade(rng, severity - 2.5, 2.0, 1)[0]
        rows.append((feats, "malignant"))
    order = rng.permutation(len(rows))
    return [rows[i] for i in order]


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    csv_path = DATA / "breast.csv"
    rows = synthesize()
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(FEATURES + ["class"]) + "\n")
        for feats, label in rows:
            fh.write(",".join(str(v) for v in feats) + f",{label}\n")
    print(f"wrote {csv_path} ({len(rows)} rows)")

    schema = infer_schema(csv_path, "class")
    data = load_csv(csv_path, schema)
    plan = stratified_kfold(data, 5, seed=FOLD_SEED)
    train = data.subset(plan.train_indices(0))
    val = data.subset(plan.test_indices(0))

    forest = train_random_forest(train, n_trees=60, max_depth=5, min_leaf=2,
                                 feature_fraction=0.6, seed=FOREST_SEED)
    model_path = DATA / "breast_forest.json"
    save_ensemble(forest, model_path)
    stats = binary_metrics(val.y, forest.predict_all(val.x))
    print(f"wrote {model_path} (validation accuracy {stats['accuracy']:.3f}, "
          f"f1 {stats['f1']:.3f})")


if __name__ == "__main__":
    main()
