"""forest-exporter: scikit-learn models to tree-ensemble interchange JSON."""

__version__ = "0.1.0"

from .convert import (
    ExportError,
    ExportManifest,
    export_boosted,
    export_decision_forest,
    n_trees_to_export,
)
from .tabular import EncodedTable, read_table

__all__ = [
    "EncodedTable",
    "ExportError",
    "ExportManifest",
    "export_boosted",
    "export_decision_forest",
    "n_trees_to_export",
    "read_table",
    "__version__",
]
