#!/usr/bin/env python3
"""Recompute benchmark tables 2-5 and write CSVs (with reference columns).

Usage: python scripts/reproduce_tables.py [outdir] [--seed N]
"""

import argparse
from pathlib import Path

from curvecmp.tables import BenchmarkSuite, build_table, rows_to_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir", nargs="?", default="tables_out")
    ap.add_argument("--seed", type=int, default=20260810)
    args = ap.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    suite = BenchmarkSuite(seed=args.seed)
    for which in (2, 3, 4, 5):
        csv_text = rows_to_csv(build_table(which, suite))
        path = outdir / f"table{which}.csv"
        path.write_text(csv_text, encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
