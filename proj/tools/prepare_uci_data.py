#!/usr/bin/env python3
"""Convert the raw UCI Adult and German Credit files into CSV + schema pairs.

Usage: prepare_uci_data.py RAW_DIR OUT_DIR

RAW_DIR must contain adult.data, adult.test and german.data (the original
UCI distribution files). Writes adult.csv, adult.schema.json, german.csv and
german.schema.json into OUT_DIR.
"""

import csv
import json
import sys
from pathlib import Path

ADULT_COLUMNS = [
    ("age", "continuous"),
    ("workclass", "categorical"),
    ("fnlwgt", "continuous"),
    ("education", "categorical"),
    ("education_num", "continuous"),
    ("marital_status", "categorical"),
    ("occupation", "categorical"),
    ("relationship", "categorical"),
    ("race", "categorical"),
    ("sex", "binary"),
    ("capital_gain", "continuous"),
    ("capital_loss", "continuous"),
    ("hours_per_week", "continuous"),
    ("native_country", "categorical"),
    ("income", "binary"),
]

GERMAN_COLUMNS = [
    ("status", "categorical"),
    ("duration", "continuous"),
    ("credit_history", "categorical"),
    ("purpose", "categorical"),
    ("credit_amount", "continuous"),
    ("savings", "categorical"),
    ("present_employment", "categorical"),
    ("installment_rate", "continuous"),
    ("status_sex", None),  # replaced by the derived sex column
    ("other_debtors", "categorical"),
    ("present_residence_since", "continuous"),
    ("property", "categorical"),
    ("age", "continuous"),
    ("installment_plans", "categorical"),
    ("housing", "categorical"),
    ("number_of_existing_credits", "continuous"),
    ("job", "categorical"),
    ("number_of_people_liable_for", "continuous"),
    ("telephone", "binary"),
    ("foreign_worker", "binary"),
    ("credit", "binary"),
]

# A91 male divorced/separated, A92 female, A93 male single,
# A94 male married/widowed, A95 female single.
GERMAN_SEX = {"A91": "male", "A92": "female", "A93": "male", "A94": "male", "A95": "female"}


def adult_rows(path):
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            fields = [v.strip() for v in line.split(",")]
            fields[-1] = fields[-1].rstrip(".")
            yield fields


def write(out_dir, name, header, rows, schema):
    with open(out_dir / f"{name}.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    with open(out_dir / f"{name}.schema.json", "w") as f:
        json.dump(schema, f, indent=2)
        f.write("\n")


def prepare_adult(raw, out):
    rows = list(adult_rows(raw / "adult.data")) + list(adult_rows(raw / "adult.test"))
    header = [c for c, _ in ADULT_COLUMNS]
    schema = {
        "columns": [{"name": c, "kind": k} for c, k in ADULT_COLUMNS],
        "sensitive": "sex",
        "target": "income",
        "positive": {"sex": "Male", "income": ">50K"},
        "missing": ["?"],
    }
    write(out, "adult", header, rows, schema)
    return len(rows), sum("?" not in r for r in rows)


def prepare_german(raw, out):
    kept = [(c, k) for c, k in GERMAN_COLUMNS if k is not None]
    rows = []
    with open(raw / "german.data") as f:
        for line in f:
            fields = line.split()
            if not fields:
                continue
            record = dict(zip([c for c, _ in GERMAN_COLUMNS], fields))
            row = [record[c] for c, _ in kept]
            row.append(GERMAN_SEX[record["status_sex"]])
            rows.append(row)
    header = [c for c, _ in kept] + ["sex"]
    schema = {
        "columns": [{"name": c, "kind": k} for c, k in kept] + [{"name": "sex", "kind": "binary"}],
        "sensitive": "sex",
        "target": "credit",
        # credit: 1 = good, 2 = bad
        "positive": {"sex": "male", "credit": "1", "telephone": "A192", "foreign_worker": "A201"},
    }
    write(out, "german", header, rows, schema)
    return len(rows)


def main(argv):
    if len(argv) != 3:
        print(__doc__, file=sys.stderr)
        return 1
    raw, out = Path(argv[1]), Path(argv[2])
    out.mkdir(parents=True, exist_ok=True)
    total, complete = prepare_adult(raw, out)
    print(f"adult: {total} rows, {complete} without missing values")
    print(f"german: {prepare_german(raw, out)} rows")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
