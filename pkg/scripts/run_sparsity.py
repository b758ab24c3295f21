#!/usr/bin/env python3
"""Sparsity study: recall on fixed-size slices of one synthetic corpus.

Extracts slices of equal size but different sparsity from a seeded corpus,
trains the CF model on each, and reports recall per slice so the
density-vs-quality trend is visible.
"""

import argparse
import logging

from kgrec.experiments import SparsityStudyConfig, run_sparsity_study


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    parser.add_argument("--slices", type=int, default=3)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser.parse_args()


def main():
    args = parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    monotone = 0
    for seed in args.seeds:
        points = run_sparsity_study(
            SparsityStudyConfig(seed=seed, n_slices=args.slices)
        )
        by_density = sorted(points, key=lambda p: -p.sparsity)
        values = [p.recall for p in by_density]
        ok = all(a <= b + 1e-12 for a, b in zip(values, values[1:]))
        monotone += ok
        cells = "  ".join(
            f"sparsity={p.sparsity:.4f} {p.recall_key}={p.recall:.4f}"
            for p in by_density
        )
        print(f"seed {seed}: {cells}  ->  {'monotone' if ok else 'not monotone'}")
    print(f"\nrecall non-decreasing with density in {monotone}/{len(args.seeds)} seeds")


if __name__ == "__main__":
    main()
