"""Command line: `forest-exporter export --model m.pkl --kind forest|boosted
--data train.csv --out model.json [--label y] [--manifest m.manifest.json]`."""

from __future__ import annotations

import argparse
import json
import pickle
import sys

from .convert import ExportError, export_boosted, export_decision_forest
from .tabular import read_table


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forest-exporter")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="convert a pickled model to interchange JSON")
    p.add_argument("--model", required=True, help="pickle file with the fitted model")
    p.add_argument("--kind", required=True, choices=["forest", "boosted"])
    p.add_argument("--data", required=True, help="training CSV (names, categories, leaf counts)")
    p.add_argument("--out", required=True, help="interchange JSON to write")
    p.add_argument("--label", help="label column (default: last column)")
    p.add_argument("--manifest", help="also write the export manifest JSON here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.model, "rb") as fh:
            model = pickle.load(fh)
        table = read_table(args.data, args.label)
        if args.kind == "forest":
            manifest = export_decision_forest(model, args.out, table)
        else:
            manifest = export_boosted(model, args.out, table)
        if args.manifest:
            with open(args.manifest, "w", encoding="utf-8") as fh:
                json.dump(manifest.to_doc(), fh, indent=2)
                fh.write("\n")
        print(args.out)
        return 0
    except (ExportError, ValueError, OSError, pickle.UnpicklingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
