#!/usr/bin/env python3
"""Convert the raw adult income census files into the package's CSV format.

The two inputs are the classic UCI files (adult.data, adult.test): comma
separated, no header, ' ?' for missing cells, and the test file carries a
leading comment line plus a trailing period on every label.  This script
normalizes all of that, drops rows with missing cells, drops test rows
whose categorical values never occur in the training split (they cannot be
encoded under a closed training schema), and writes:

    OUT/train.csv, OUT/test.csv, OUT/adult.schema

Usage: prepare_adult.py RAW_TRAIN RAW_TEST [--out DIR]
"""
import argparse
import csv
import sys
from pathlib import Path

COLUMNS = [
    ("age", "numeric"),
    ("workclass", "categorical"),
    ("fnlwgt", "numeric"),
    ("education", "categorical"),
    ("education-num", "numeric"),
    ("marital-status", "categorical"),
    ("occupation", "categorical"),
    ("relationship", "categorical"),
    ("race", "categorical"),
    ("sex", "categorical"),
    ("capital-gain", "numeric"),
    ("capital-loss", "numeric"),
    ("hours-per-week", "numeric"),
    ("native-country", "categorical"),
    ("income", "categorical"),
]
CLASS = "income"


def read_raw(path: Path, strip_label_dot: bool) -> tuple[list[list[str]], int]:
    """Parse one raw file; returns (clean rows, number dropped for '?')."""
    rows, dropped = [], 0
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            cells = [c.strip() for c in record]
            if not cells or (len(cells) == 1 and (not cells[0] or cells[0].startswith("|"))):
                continue  # blank line or the test file's comment header
            if len(cells) != len(COLUMNS):
                raise SystemExit(
                    f"{path}: expected {len(COLUMNS)} fields, got {len(cells)}: {record!r}"
                )
            if strip_label_dot:
                cells[-1] = cells[-1].rstrip(".")
            if "?" in cells:
                dropped += 1
                continue
            rows.append(cells)
    return rows, dropped


def write_out(path: Path, rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _ in COLUMNS])
        writer.writerows(rows)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw_train", type=Path)
    ap.add_argument("raw_test", type=Path)
    ap.add_argument("--out", type=Path, default=Path("data/adult"))
    args = ap.parse_args(argv)

    train, train_dropped = read_raw(args.raw_train, strip_label_dot=False)
    test, test_dropped = read_raw(args.raw_test, strip_label_dot=True)
    if not train or not test:
        raise SystemExit("empty split after cleaning; wrong input files?")

    # the training schema closes its category lists, so test rows holding a
    # label never seen in training cannot be represented; drop and report
    cat_cols = [j for j, (_, kind) in enumerate(COLUMNS) if kind == "categorical"]
    seen = {j: {r[j] for r in train} for j in cat_cols}
    kept = [r for r in test if all(r[j] in seen[j] for j in cat_cols)]
    unseen_dropped = len(test) - len(kept)

    args.out.mkdir(parents=True, exist_ok=True)
    write_out(args.out / "train.csv", train)
    write_out(args.out / "test.csv", kept)
    schema_lines = ["# adult income schema: every non-class attribute is a quasi-identifier"]
    for name, kind in COLUMNS:
        role = "class" if name == CLASS else "quasi_identifier"
        schema_lines.append(f"{name},{kind},{role}")
    (args.out / "adult.schema").write_text("\n".join(schema_lines) + "\n")

    # round-trip through the package loader to prove the files are usable
    try:
        from privforget.data import load_csv, parse_schema_file

        schema = parse_schema_file(args.out / "adult.schema")
        loaded = load_csv(args.out / "train.csv", schema)
        load_csv(args.out / "test.csv", loaded.schema)
    except ImportError:
        print("note: privforget not installed, skipping load check", file=sys.stderr)

    print(f"train: {len(train)} rows ({train_dropped} dropped for missing cells)")
    print(
        f"test: {len(kept)} rows ({test_dropped} dropped for missing cells, "
        f"{unseen_dropped} for unseen categories)"
    )
    print(f"wrote {args.out}/train.csv, test.csv, adult.schema")
    return 0


if __name__ == "__main__":
    sys.exit(main())
