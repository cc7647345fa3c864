#!/usr/bin/env python3
"""Run the two shipped benchmark sweeps and write one CSV per config.

Usage:  python3 scripts/run_benchmarks.py [--out-dir results]

The queue config takes about a minute at a = 10^4 on one core; the walk
config a few seconds.  Re-running overwrites the CSVs in place.
"""

import argparse
import os

from stattrunc import load_config
from stattrunc.cli import emit, run_experiment

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = ("gm1.yaml", "random_walk.yaml")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default=os.path.join(REPO, "results"))
    ap.add_argument("--validate", action="store_true",
                    help="add Monte Carlo cross-checks at desk-scale a")
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)
    for name in CONFIGS:
        cfg = load_config(os.path.join(REPO, "configs", name))
        rows = run_experiment(cfg, validate=args.validate)
        out = os.path.join(args.out_dir, name.replace(".yaml", ".csv"))
        emit(rows, "csv", out)
        print(f"{name}:")
        for row in rows:
            print(f"  a = {row['a']:>6}  [{row['lower']:.6f}, {row['upper']:.6f}]"
                  f"  ({row['wall_time_seconds']:.2f}s, {row['status']})")
        print(f"  -> {out}")


if __name__ == "__main__":
    main()
