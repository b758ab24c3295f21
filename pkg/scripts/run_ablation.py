#!/usr/bin/env python3
"""Run the model-variant ablation on seeded synthetic corpora.

Trains CF-only, gated content, gated content+relations, and the
unweighted-sum variant per seed, then prints a metrics table per variant
(means over seeds) plus the per-seed recall@50 ordering counts.
"""

import argparse
import csv
import logging
from collections import defaultdict
from dataclasses import replace

from kgrec.experiments import ABLATION_VARIANTS, AblationConfig, run_ablation
from kgrec.fusion import NmorConfig
from kgrec.mf import MfConfig
from kgrec.synth import SynthConfig


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    parser.add_argument("--editors", type=int, default=2000)
    parser.add_argument("--items", type=int, default=5000)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--mf-epochs", type=int, default=20)
    parser.add_argument("--gate-epochs", type=int, default=8)
    parser.add_argument("--eval-editors", type=int, default=250)
    parser.add_argument("--out", default=None, help="optional CSV for raw rows")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser.parse_args()


def main():
    args = parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    rows = []
    sums = defaultdict(lambda: defaultdict(float))
    full_wins = gate_wins = 0
    for seed in args.seeds:
        cfg = AblationConfig(
            corpus=SynthConfig(n_editors=args.editors, n_items=args.items,
                               dim=args.dim),
            mf=MfConfig(dim=args.dim, epochs=args.mf_epochs),
            nmor=NmorConfig(hidden=args.dim, epochs=args.gate_epochs,
                            learning_rate=0.003),
            max_eval_editors=args.eval_editors,
            seed=seed,
        )
        reports = run_ablation(cfg)
        recall = {v: reports[v].metrics["recall@50"] for v in ABLATION_VARIANTS}
        full_wins += recall["cf+content+relations"] > recall["cf"]
        gate_wins += recall["cf+content+relations"] >= recall["sum"]
        print(f"seed {seed}: " + "  ".join(
            f"{v}={recall[v]:.4f}" for v in ABLATION_VARIANTS))
        for variant in ABLATION_VARIANTS:
            for name, value in reports[variant].metrics.items():
                sums[variant][name] += value
            rows.append({"seed": seed, "model": variant,
                         **reports[variant].metrics})

    print("\nmean metrics over seeds:")
    metric_names = sorted({m for v in sums.values() for m in v})
    print("model".ljust(24) + " ".join(n.rjust(13) for n in metric_names))
    for variant in ABLATION_VARIANTS:
        cells = [
            f"{sums[variant][n] / len(args.seeds):.4f}".rjust(13)
            if n in sums[variant] else " " * 13
            for n in metric_names
        ]
        print(variant.ljust(24) + " ".join(cells))
    print(f"\nfull > cf on recall@50: {full_wins}/{len(args.seeds)} seeds")
    print(f"gated >= sum on recall@50: {gate_wins}/{len(args.seeds)} seeds")

    if args.out:
        fields = ["seed", "model"] + metric_names
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        print(f"raw rows written to {args.out}")


if __name__ == "__main__":
    main()
