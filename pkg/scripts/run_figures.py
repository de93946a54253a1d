#!/usr/bin/env python3
"""Regenerate every preset sweep as plot-ready CSV.

Writes one file per preset into --out (default ./figures-data) and
prints a one-line summary each.  Exit status is nonzero if any row
failed its bound or gain check, so this doubles as a slow smoke test:

    python3 scripts/run_figures.py --out figures-data --jobs 4
"""

import argparse
import sys
import time
from pathlib import Path

from codedlat import harness


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="figures-data", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override preset seeds")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")
    parser.add_argument("--only", choices=sorted(harness.PRESETS), action="append",
                        help="run a subset (repeatable)")
    args = parser.parse_args(argv)

    names = args.only or sorted(harness.PRESETS)
    out_dir = Path(args.out)
    failures = 0
    for name in names:
        spec = harness.preset(name, seed=args.seed)
        started = time.monotonic()
        rows = harness.run_sweep(spec, workers=args.jobs)
        path = out_dir / f"{name}.csv"
        harness.write_csv(rows, path)
        bad = sum(not row.passed for row in rows)
        failures += bad
        print(f"{name}: {len(rows)} rows, {bad} failed, "
              f"{time.monotonic() - started:.1f}s -> {path}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
