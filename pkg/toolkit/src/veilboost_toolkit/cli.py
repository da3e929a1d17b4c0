"""Toolkit commands: train-export, oracle-predict, validate-accuracy, split.

JSON on stdout throughout, so the engine's acceptance harness can drive
everything through subprocesses.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .oracle import load_document, oracle_predict, validate_accuracy
from .trainer import read_labeled_csv, split_rows, train_export, write_labeled_csv


def _read_rows(path) -> tuple[list[str], list[dict], list]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = [c for c in reader.fieldnames if c != "label"]
        rows, labels = [], []
        for record in reader:
            rows.append({name: float(record[name]) for name in names})
            labels.append(record.get("label"))
    return names, rows, labels


def cmd_train_export(args) -> int:
    _, manifest = train_export(
        args.csv, num_trees=args.trees, max_depth=args.depth, mode=args.mode,
        seed=args.seed, out_dir=args.out_dir,
    )
    print(json.dumps(manifest))
    return 0


def cmd_oracle_predict(args) -> int:
    _, rows, _ = _read_rows(args.rows)
    for record in oracle_predict(load_document(args.model), rows, args.bitwidth):
        print(json.dumps(record))
    return 0


def cmd_validate_accuracy(args) -> int:
    _, rows, labels = _read_rows(args.rows)
    if any(label is None for label in labels):
        raise SystemExit("validation CSV needs a 'label' column")
    accuracy = validate_accuracy(
        load_document(args.model), rows, [int(l) for l in labels]
    )
    print(json.dumps({"accuracy": accuracy}))
    return 0


def cmd_split(args) -> int:
    names, rows, labels = read_labeled_csv(args.csv)
    split = split_rows(len(rows), args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for part in ("train", "test", "validation"):
        indices = getattr(split, part)
        write_labeled_csv(out / f"{part}.csv", names, rows[indices], labels[indices])
    print(json.dumps({p: int(len(getattr(split, p))) for p in ("train", "test", "validation")}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="veilboost-toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-export", help="train a model and export schema JSON")
    p.add_argument("--csv", required=True, help="labeled CSV (features + label)")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--depth", type=int, default=7)
    p.add_argument("--mode", choices=("xgboost", "adaboost"), default="xgboost")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train_export)

    p = sub.add_parser("oracle-predict", help="quantized plaintext predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--rows", required=True)
    p.add_argument("--bitwidth", type=int, default=8)
    p.set_defaults(func=cmd_oracle_predict)

    p = sub.add_parser("validate-accuracy", help="raw-threshold accuracy on labeled rows")
    p.add_argument("--model", required=True)
    p.add_argument("--rows", required=True)
    p.set_defaults(func=cmd_validate_accuracy)

    p = sub.add_parser("split", help="write the 0.6/0.2/0.2 dataset split")
    p.add_argument("--csv", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
