#!/usr/bin/env python3
"""Run study B: inner Monte Carlo on the 50-unit rerandomized design.

The design is sampler-backed, so every replication scores the estimators
on an empirical design built from --inner-draws accepted assignments.
Writes results.csv, summary.json, and per-model boxplot SVGs to --out.
"""

import argparse
from pathlib import Path

from designvar import emit_outputs, run_study_b


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=100,
                        help="replications per outcome model (default: 100)")
    parser.add_argument("--inner-draws", type=int, default=20_000,
                        help="accepted assignments per empirical design "
                             "(default: 20000)")
    parser.add_argument("--outer", type=int, default=200,
                        help="realizations scored per replication "
                             "(default: 200)")
    parser.add_argument("--seed", type=int, default=0,
                        help="master seed (default: 0)")
    parser.add_argument("--out", type=Path, default=Path("out/study-b"),
                        help="output directory (default: out/study-b)")
    args = parser.parse_args()

    res = run_study_b(
        seed=args.seed,
        n_replications=args.reps,
        n_inner_draws=args.inner_draws,
        n_outer=args.outer,
    )
    paths = emit_outputs(res, args.out)
    print(f"study B: {len(res.records)} records")
    for path in paths:
        print(f"  wrote {path}")


if __name__ == "__main__":
    main()
