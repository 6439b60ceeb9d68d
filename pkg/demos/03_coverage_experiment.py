#!/usr/bin/env python3
"""Reproduce the coverage-band experiment on synthetic data.

Draws an exchangeable corpus whose scores correlate with the labels,
then repeatedly re-splits it into calibration/test, calibrates, and
measures how often test documents met the recall target. The mean
coverage should sit inside [1-alpha, 1-alpha + 1/(n+1)] for every cell;
watching that hold across a whole grid is the point of the exercise.

Takes a few seconds; pass --splits to trade precision for speed.
"""

import argparse
import math

from cise.evaluation import ExperimentGrid, run_coverage_experiment
from cise.synthetic import make_scored_corpus

parser = argparse.ArgumentParser()
parser.add_argument("--splits", type=int, default=400)
parser.add_argument("--docs", type=int, default=2000)
parser.add_argument("--out", default=None, help="also write CSV/JSON here")
args = parser.parse_args()

corpus = make_scored_corpus(n_docs=args.docs, p=40, seed=7)
grid = ExperimentGrid(
    alphas=(0.05, 0.1, 0.2, 0.3, 0.4),
    betas=(0.7, 0.8, 0.9, 1.0),
    n_splits=args.splits,
    cal_size=100,
    seed=11,
)

result = run_coverage_experiment(corpus, grid, scorer_id="synthetic", out_dir=args.out)

print(f"{args.docs} docs, cal_size=100, {args.splits} random splits\n")
print("alpha  beta   mean_cov   band [lower, upper)    in band?  conciseness")
for cell in result.cells:
    se = cell.std_coverage / math.sqrt(grid.n_splits)
    inside = cell.lower_bound - 3 * se <= cell.mean_coverage <= cell.upper_bound + 3 * se
    print(
        f"{cell.alpha:5.2f}  {cell.beta:4.2f}   {cell.mean_coverage:.4f}   "
        f"[{cell.lower_bound:.4f}, {cell.upper_bound:.4f})   "
        f"{'yes' if inside else 'NO':>7}   {cell.mean_conciseness:.3f}"
    )

print("\ntrends to look for, mirroring the alpha/beta trade-off:")
print("  - at fixed beta, conciseness grows with alpha (more risk, shorter summaries)")
print("  - at fixed alpha, conciseness shrinks as beta demands more recall")
if args.out:
    print(f"\nwrote splits.csv / summary.json / metadata.json under {args.out}")
