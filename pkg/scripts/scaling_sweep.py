#!/usr/bin/env python3
"""Iteration/time versus problem size at a fixed sample size.

Sweeps the row count by default (column-count sweep via --axis n). Desk-scale
defaults; the published protocol used m up to 50000 with n = 1000 and
beta = 200, which needs a few GB of memory:

    python3 scripts/scaling_sweep.py --axis m --values 5000,10000,20000 --out m_sweep.csv
"""

import argparse
import sys

from bskm.cli import main as bskm_main


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--axis", choices=("m", "n"), default="m")
    p.add_argument("--values", default="5000,10000,20000")
    p.add_argument("--m", type=int, default=20000, help="fixed rows for an n sweep")
    p.add_argument("--n", type=int, default=500, help="fixed columns for an m sweep")
    p.add_argument("--beta", type=int, default=200)
    p.add_argument("--methods", default="skm,bskm1,bskm2")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--out", default="scaling_sweep.csv")
    args = p.parse_args()
    return bskm_main([
        "sweep", "--axis", args.axis, "--values", args.values,
        "--m", str(args.m), "--n", str(args.n), "--beta", str(args.beta),
        "--methods", args.methods, "--trials", str(args.trials),
        "--seed-base", str(args.seed_base), "--out", args.out,
    ])


if __name__ == "__main__":
    sys.exit(main())
