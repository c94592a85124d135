#!/usr/bin/env python3
"""Iteration/time versus sample size on one random system family.

Desk-scale defaults (5000x500, beta in {10, 50, 100, 500, 1000}); raise the
axes toward the published protocol with --m/--n/--values if the hardware
allows. Writes a CSV consumable by the plots package:

    python3 scripts/beta_sweep.py --out results/beta_sweep.csv
    plots results/beta_sweep.csv --x beta --y iterations --out beta_iters.png
"""

import argparse
import sys

from bskm.cli import main as bskm_main


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--m", type=int, default=5000)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--values", default="10,50,100,500,1000")
    p.add_argument("--methods", default="skm,bskm1,bskm2")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--out", default="beta_sweep.csv")
    args = p.parse_args()
    return bskm_main([
        "sweep", "--axis", "beta", "--values", args.values,
        "--m", str(args.m), "--n", str(args.n),
        "--methods", args.methods, "--trials", str(args.trials),
        "--seed-base", str(args.seed_base), "--out", args.out,
    ])


if __name__ == "__main__":
    sys.exit(main())
