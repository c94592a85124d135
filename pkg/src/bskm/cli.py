"""Command-line harness: single solves, parameter sweeps, bound verification.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from .bounds import EnumerationLimitError, build_bound_report, expected_contraction_exact
from .solvers import METHODS, WEIGHTS_MODES, SolverConfig, solve
from .systems import RunRecord, generate_gaussian, load_system, read_csv, write_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

_BOUND_SLACK = 1e-10
_RATIO_SLACK = 1e-12


class UsageError(ValueError):
    """Bad flag combination detected after parsing."""


class _Parser(argparse.ArgumentParser):
    # spec'd exit codes: usage errors are 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class SweepPlan:
    """One swept axis over fixed remaining parameters."""

    axis: str            # beta | m | n
    values: list
    m: int
    n: int
    beta: int
    methods: list
    trials: int
    seed_base: int
    output: str
    matrix: str | None = None
    res_tol: float = 1e-6
    max_iters: int = 200_000
    beta_j: int | None = None

    def validate(self):
        if self.axis not in ("beta", "m", "n"):
            raise UsageError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise UsageError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise UsageError("sweep values must be strictly increasing")
        if not self.methods:
            raise UsageError("sweep needs at least one method")
        for meth in self.methods:
            if meth not in METHODS:
                raise UsageError(f"unknown method {meth!r}")
        if self.trials < 1:
            raise UsageError("trials must be at least 1")
        if self.axis != "beta" and self.matrix is not None:
            raise UsageError("m/n sweeps regenerate random systems; --matrix only fits a beta sweep")


def build_parser():
    p = _Parser(prog="bskm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run one method on one system")
    src = ps.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", help="Matrix Market file")
    src.add_argument("--random", nargs=2, type=int, metavar=("M", "N"),
                     help="seeded Gaussian system of this size")
    ps.add_argument("--method", required=True, choices=METHODS)
    ps.add_argument("--beta", type=int)
    ps.add_argument("--eta", type=int)
    ps.add_argument("--beta-j", type=int, dest="beta_j")
    ps.add_argument("--weights", choices=WEIGHTS_MODES, default="uniform")
    ps.add_argument("--tol", type=float, default=1e-6)
    ps.add_argument("--max-iters", type=int, default=200_000)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--history-stride", type=int, default=1)
    ps.add_argument("--no-reference", action="store_true",
                    help="skip the reference solve; stop on relative residual instead")
    ps.add_argument("--out", help="append the run record to this CSV")

    pw = sub.add_parser("sweep", help="parameter sweep over beta, m or n")
    pw.add_argument("--axis", required=True, choices=("beta", "m", "n"))
    pw.add_argument("--values", required=True,
                    help="comma-separated, strictly increasing axis values")
    pw.add_argument("--m", type=int, default=1000)
    pw.add_argument("--n", type=int, default=100)
    pw.add_argument("--beta", type=int, default=100,
                    help="fixed sample size for m/n sweeps (BSKM2 uses eta = beta)")
    pw.add_argument("--beta-j", type=int, dest="beta_j",
                    help="override BSKM2 per-sub-sample size (default floor(beta/eta) = 1)")
    pw.add_argument("--methods", default="skm,bskm1,bskm2")
    pw.add_argument("--trials", type=int, default=5)
    pw.add_argument("--seed-base", type=int, default=0)
    pw.add_argument("--matrix", help="fixed Matrix Market system (beta sweeps only)")
    pw.add_argument("--tol", type=float, default=1e-6)
    pw.add_argument("--max-iters", type=int, default=200_000)
    pw.add_argument("--out", required=True)

    pv = sub.add_parser("verify-bounds", help="exhaustively check the contraction bounds")
    pv.add_argument("--m", type=int, required=True)
    pv.add_argument("--n", type=int, required=True)
    pv.add_argument("--beta", type=int)
    pv.add_argument("--eta", type=int)
    pv.add_argument("--beta-j", type=int, dest="beta_j")
    pv.add_argument("--seeds", type=int, default=10)
    pv.add_argument("--verbose", action="store_true",
                    help="also print every per-sample (lhs, rhs) pair")
    return p


def _solve_config(method, beta, eta, beta_j, weights, tol, max_iters, seed, stride=1):
    if method in ("skm", "bskm1") and beta is None:
        raise UsageError(f"--method {method} requires --beta")
    if method in ("bskm2", "bskm2-pf") and eta is None:
        raise UsageError(f"--method {method} requires --eta")
    if method not in ("bskm2", "bskm2-pf") and (eta is not None or beta_j is not None):
        raise UsageError("--eta/--beta-j only apply to bskm2 and bskm2-pf")
    if method in ("rk", "motzkin") and beta is not None:
        raise UsageError(f"--beta does not apply to {method}")
    return SolverConfig(method=method, beta=beta, eta=eta, beta_j=beta_j,
                        weights_mode=weights, res_tol=tol, max_iters=max_iters,
                        seed=seed, history_stride=stride)


def _append_record(record, path):
    records = read_csv(path) if os.path.exists(path) else []
    records.append(record)
    write_csv(records, path)


def cmd_solve(args):
    cfg = _solve_config(args.method, args.beta, args.eta, args.beta_j, args.weights,
                        args.tol, args.max_iters, args.seed, args.history_stride)
    if args.matrix is not None:
        system = load_system(args.matrix)
    else:
        m, n = args.random
        system = generate_gaussian(m, n, args.seed)
    report = solve(system, cfg, use_reference=not args.no_reference)
    rec = RunRecord(
        method=args.method, m=system.m, n=system.n,
        beta=args.beta, eta=args.eta,
        beta_j=cfg.resolved_beta_j() if args.eta is not None else None,
        seed=args.seed, trial=0, iterations=report.iterations,
        cpu_time_s=report.wall_time_s, final_res=report.final_res,
        termination=report.termination,
    )
    print(
        f"method={args.method} m={system.m} n={system.n} beta={args.beta} eta={args.eta} "
        f"iterations={report.iterations} time={report.wall_time_s:.4f}s "
        f"final_{report.metric.replace('-', '_')}={report.final_res:.6e} "
        f"termination={report.termination}"
    )
    if args.out:
        _append_record(rec, args.out)
    return EXIT_OK


def run_sweep(plan: SweepPlan):
    """Execute a sweep plan; returns (records, ok)."""
    plan.validate()
    records = []
    systems = {}
    ok = True
    fixed_matrix = load_system(plan.matrix) if plan.matrix else None
    for value in plan.values:
        m = value if plan.axis == "m" else plan.m
        n = value if plan.axis == "n" else plan.n
        beta = value if plan.axis == "beta" else plan.beta
        for method in plan.methods:
            for trial in range(plan.trials):
                seed = plan.seed_base + trial
                if fixed_matrix is not None:
                    system = fixed_matrix
                    m, n = system.m, system.n
                else:
                    key = (m, n, seed)
                    if key not in systems:
                        systems[key] = generate_gaussian(m, n, seed)
                        systems[key].ensure_reference()
                    system = systems[key]
                cfg = SolverConfig(
                    method=method,
                    beta=beta if method in ("skm", "bskm1") else None,
                    eta=beta if method in ("bskm2", "bskm2-pf") else None,
                    beta_j=plan.beta_j if method in ("bskm2", "bskm2-pf") else None,
                    res_tol=plan.res_tol, max_iters=plan.max_iters,
                    seed=seed, history_stride=max(1, plan.max_iters // 200),
                )
                report = solve(system, cfg)
                records.append(RunRecord(
                    method=method, m=m, n=n, beta=beta,
                    eta=cfg.eta, beta_j=cfg.resolved_beta_j() if cfg.eta else None,
                    seed=seed, trial=trial, iterations=report.iterations,
                    cpu_time_s=report.wall_time_s, final_res=report.final_res,
                    termination=report.termination,
                ))
                if report.termination == "stagnation":
                    ok = False
    return records, ok


def cmd_sweep(args):
    try:
        values = [int(v) for v in args.values.split(",") if v]
    except ValueError:
        raise UsageError(f"--values must be comma-separated integers, got {args.values!r}") from None
    plan = SweepPlan(
        axis=args.axis, values=values, m=args.m, n=args.n, beta=args.beta,
        methods=[s for s in args.methods.split(",") if s], trials=args.trials,
        seed_base=args.seed_base, output=args.out, matrix=args.matrix,
        res_tol=args.tol, max_iters=args.max_iters, beta_j=args.beta_j,
    )
    records, ok = run_sweep(plan)
    write_csv(records, plan.output)
    print(f"wrote {len(records)} records to {plan.output}")
    if not ok:
        print("at least one run stagnated", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_verify_bounds(args):
    if args.beta is None and args.eta is None:
        raise UsageError("give --beta (threshold-block check), --eta [--beta-j] (greedy-block check), or both")
    beta_j = args.beta_j if args.beta_j is not None else 1
    checks = {}

    def record(name, passed):
        checks[name] = checks.get(name, True) and passed

    print(f"{'seed':>4} {'norm_ratio':>12} {'bskm1_factor':>13} {'bskm2_factor':>13} "
          f"{'lambda_max':>12} {'lambda_min_pos':>15} {'max lhs-rhs':>12}")
    for seed in range(args.seeds):
        system = generate_gaussian(args.m, args.n, seed)
        x = np.zeros(args.n)
        report = build_bound_report(system.A, system.b, x, beta=args.beta,
                                    eta=args.eta,
                                    beta_j=beta_j if args.eta is not None else None)
        worst_gap = max((lhs - rhs for _, lhs, rhs in report.per_sample_slack), default=float("-inf"))
        if args.beta is not None:
            record("per-sample bound (threshold block)", all(
                lhs <= rhs + _BOUND_SLACK
                for sid, lhs, rhs in report.per_sample_slack if sid.startswith("tau=")))
            record("norm ratio within [1, beta]",
                   1.0 - _RATIO_SLACK <= report.norm_ratio <= args.beta + _RATIO_SLACK)
            e_lhs, bound = expected_contraction_exact(
                "bskm1", system.A, system.b, x, beta=args.beta)
            record("expected contraction (threshold block)", e_lhs <= bound + _BOUND_SLACK)
        if args.eta is not None:
            record("per-tuple bound (greedy block)", all(
                lhs <= rhs + _BOUND_SLACK
                for sid, lhs, rhs in report.per_sample_slack if sid.startswith("tuple=")))
            e_lhs, bound = expected_contraction_exact(
                "bskm2", system.A, system.b, x, eta=args.eta, beta_j=beta_j)
            record("expected contraction (greedy block)", e_lhs <= bound + _BOUND_SLACK)
        print(f"{seed:>4} {_fmt(report.norm_ratio):>12} {_fmt(report.bskm1_factor):>13} "
              f"{_fmt(report.bskm2_factor):>13} {report.spectral.lambda_max:>12.6g} "
              f"{report.spectral.lambda_min_pos:>15.6g} {worst_gap:>12.3e}")
        if args.verbose:
            for sid, lhs, rhs in report.per_sample_slack:
                print(f"    {sid}: lhs={lhs:.12e} rhs={rhs:.12e}")
    failed = False
    for name, passed in checks.items():
        print(f"{'PASS' if passed else 'FAIL'}: {name}")
        failed = failed or not passed
    return EXIT_RUNTIME if failed else EXIT_OK


def _fmt(v):
    return "-" if v is None else f"{v:.6g}"


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"solve": cmd_solve, "sweep": cmd_sweep, "verify-bounds": cmd_verify_bounds}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"bskm: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnumerationLimitError as exc:
        print(f"bskm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # contract violations, I/O failures, parse errors
        print(f"bskm: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
