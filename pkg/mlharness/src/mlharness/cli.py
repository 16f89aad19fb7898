"""CLI: train the comparison suite on an emitted dataset directory."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import HarnessError, LeakageDetected, load_dataset
from .harness import evaluate, train_families, write_reports
from .models import FAMILIES


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mlharness", description=__doc__)
    parser.add_argument("--data", type=Path, required=True,
                        help="directory with train/val/test.csv and split_manifest.txt")
    parser.add_argument("--out", type=Path, default=None,
                        help="report directory (default: the data directory)")
    parser.add_argument("--families", default=",".join(FAMILIES),
                        help="comma-separated subset of " + ",".join(FAMILIES))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1, help="parallel family training processes")
    args = parser.parse_args(argv)

    families = tuple(f.strip() for f in args.families.split(",") if f.strip())
    unknown = [f for f in families if f not in FAMILIES]
    if unknown:
        parser.error(f"unknown families {unknown}")
    try:
        splits = load_dataset(args.data)
        results = train_families(splits["train"], splits["val"], families, args.seed, args.jobs)
        report = evaluate(results, splits["test"])
    except LeakageDetected as exc:
        print(f"error: LeakageDetected: {exc}", file=sys.stderr)
        return 5
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    out = args.out or args.data
    write_reports(report, out)
    print(report.table())
    return 0


if __name__ == "__main__":
    sys.exit(main())
