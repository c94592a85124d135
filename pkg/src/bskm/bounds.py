"""Exact verification of the block methods' expected-contraction bounds.

Everything here enumerates: sums run over all admissible samples (uniform
subsets for BSKM1, ordered disjoint sub-sample tuples for BSKM2), so results
are exact up to floating point. A hard guard of 10^6 enumerated samples
refuses anything larger rather than silently switching to sampling.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .matrices import MatrixStore, gram_extreme_eigs, min_norm_least_squares, min_norm_solution
from .solvers import argmax_violation, bskm1_build_index_set, bskm2_collect

ENUMERATION_LIMIT = 1_000_000


class EnumerationLimitError(RuntimeError):
    """Too many samples to enumerate exactly; use a sampled estimate instead."""


@dataclass
class BoundReport:
    """Contraction-bound quantities for one iterate of one instance.

    ``norm_ratio`` is the subset-summed squared 2-norm over subset-summed
    squared max-norm ratio of the sampled residual blocks (lies in [1, beta]).
    The factors are the worst case over realized index sets, which is the
    sample-independent form implied by the per-sample inequalities.
    """

    norm_ratio: float | None
    bskm1_factor: float | None
    bskm2_factor: float | None
    per_sample_slack: list  # (sample id, lhs, rhs) triples
    spectral: object  # SpectralSummary of the full matrix


def _residual(A, b, x):
    return b - A.matvec(x)


def _check_subset_budget(m, beta):
    if math.comb(m, beta) > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"(m choose beta) = C({m},{beta}) exceeds {ENUMERATION_LIMIT}; "
            "reduce m or beta, or estimate by sampling"
        )


def _tuple_budget(m, eta, beta_j):
    total = 1
    for j in range(eta):
        total *= math.comb(m - j * beta_j, beta_j)
        if total > ENUMERATION_LIMIT:
            raise EnumerationLimitError(
                f"number of disjoint sample tuples exceeds {ENUMERATION_LIMIT}; "
                "reduce m, eta or beta_j, or estimate by sampling"
            )
    return total


def _disjoint_tuples(m, eta, beta_j):
    """All ordered tuples of eta mutually disjoint beta_j-subsets of range(m)."""

    def rec(remaining, depth):
        if depth == eta:
            yield ()
            return
        for subset in combinations(remaining, beta_j):
            chosen = set(subset)
            rest = tuple(i for i in remaining if i not in chosen)
            for tail in rec(rest, depth + 1):
                yield (subset,) + tail

    yield from rec(tuple(range(m)), 0)


def norm_ratio_exact(A: MatrixStore, b, x, beta):
    """Sum of squared 2-norms over sum of squared max-norms of all sampled
    residual blocks of size beta. Exactly 1.0 at beta = 1; at most beta."""
    m = A.nrows
    if not 1 <= beta <= m:
        raise ValueError(f"beta={beta} outside [1, m={m}]")
    _check_subset_budget(m, beta)
    r = _residual(A, b, x)
    sq = r * r
    if not np.any(sq > 0):
        raise ValueError("zero residual: the ratio is undefined at the exact solution")
    total_two = 0.0
    total_inf = 0.0
    for tau in combinations(range(m), beta):
        block = sq[list(tau)]
        total_two += float(block.sum())
        total_inf += float(block.max())
    return total_two / total_inf


def bskm1_contraction_factor(A: MatrixStore, I_k, norm_ratio, beta):
    """Expected-contraction factor of the threshold-block method for one
    realized index set: 1 - (beta/ratio) (|I|/m) lmin(A^T A)/lmax(A_I^T A_I)."""
    I_k = np.asarray(I_k, dtype=np.int64)
    if I_k.size == 0:
        raise ValueError("empty index set")
    if norm_ratio < 1.0:
        raise ValueError("norm ratio below 1")
    full = gram_extreme_eigs(A.toarray())
    block = gram_extreme_eigs(A.take_rows(I_k))
    return 1.0 - (beta / norm_ratio) * (I_k.size / A.nrows) * (
        full.lambda_min_pos / block.lambda_max
    )


def bskm2_contraction_factor(A: MatrixStore, J_k, tau_h, eta):
    """Expected-contraction factor of the disjoint-sub-sample method:
    1 - eta lmin_pos(A_tau_h^T A_tau_h) / (|tau_h| lmax(A_J^T A_J))."""
    J_k = np.asarray(J_k, dtype=np.int64)
    tau_h = np.asarray(tau_h, dtype=np.int64)
    if J_k.size == 0 or tau_h.size == 0:
        raise ValueError("empty index set")
    sub = gram_extreme_eigs(A.take_rows(tau_h))
    block = gram_extreme_eigs(A.take_rows(J_k))
    return 1.0 - eta * sub.lambda_min_pos / (tau_h.size * block.lambda_max)


def _bskm1_one_sample(A, b, x, x_star, r, err_sq, tau):
    tau_arr = np.asarray(tau, dtype=np.int64)
    t_k, delta = argmax_violation(A, b, x, tau_arr, residual=r)
    idx = bskm1_build_index_set(A, b, x, tau_arr, delta, t_k, residual=r)
    d = min_norm_least_squares(A.take_rows(idx), r[idx])
    x_next = x + d
    diff = x_next - x_star
    lhs = float(diff @ diff)
    lam_max = gram_extreme_eigs(A.take_rows(idx)).lambda_max
    rhs = err_sq - (idx.size / lam_max) * delta
    return idx, lhs, rhs


def bskm1_per_sample_bounds(A: MatrixStore, b, x, beta, x_star=None):
    """For every size-beta sample: the squared error after one threshold-block
    step (lhs) and its per-sample bound (rhs). lhs <= rhs holds for all."""
    m = A.nrows
    _check_subset_budget(m, beta)
    if x_star is None:
        x_star = min_norm_solution(A, b)
    x = np.asarray(x, dtype=np.float64)
    r = _residual(A, b, x)
    err = x - x_star
    err_sq = float(err @ err)
    out = []
    for tau in combinations(range(m), beta):
        _, lhs, rhs = _bskm1_one_sample(A, b, x, x_star, r, err_sq, tau)
        out.append((tau, lhs, rhs))
    return out


def _bskm2_one_tuple(A, b, x, x_star, r, err_sq, chunks):
    idx = bskm2_collect(A, b, x, chunks, residual=r)
    d = min_norm_least_squares(A.take_rows(idx), r[idx])
    x_next = x + d
    diff = x_next - x_star
    lhs = float(diff @ diff)
    lam_max = gram_extreme_eigs(A.take_rows(idx)).lambda_max
    inf_sum = sum(float(np.max(r[c] ** 2)) for c in chunks)
    rhs = err_sq - inf_sum / lam_max
    return idx, lhs, rhs


def bskm2_per_tuple_bounds(A: MatrixStore, b, x, eta, beta_j, x_star=None):
    """For every ordered disjoint sample tuple: squared error after one
    greedy-block step (lhs) and its per-tuple bound (rhs)."""
    m = A.nrows
    _tuple_budget(m, eta, beta_j)
    if x_star is None:
        x_star = min_norm_solution(A, b)
    x = np.asarray(x, dtype=np.float64)
    r = _residual(A, b, x)
    err = x - x_star
    err_sq = float(err @ err)
    out = []
    for chunks in _disjoint_tuples(m, eta, beta_j):
        arrs = [np.asarray(c, dtype=np.int64) for c in chunks]
        _, lhs, rhs = _bskm2_one_tuple(A, b, x, x_star, r, err_sq, arrs)
        out.append((chunks, lhs, rhs))
    return out


def expected_contraction_exact(method, A: MatrixStore, b, x, beta=None, eta=None,
                               beta_j=None, x_star=None):
    """Exact one-step expectation of the squared error versus the worst-case
    factor bound.

    Returns (E_lhs, bound_rhs) with E_lhs the uniform average of the squared
    error over all samples and bound_rhs = max-over-samples contraction factor
    times the current squared error. E_lhs <= bound_rhs.
    """
    if x_star is None:
        x_star = min_norm_solution(A, b)
    x = np.asarray(x, dtype=np.float64)
    err = x - x_star
    err_sq = float(err @ err)
    r = _residual(A, b, x)
    if method == "bskm1":
        if beta is None:
            raise ValueError("bskm1 needs beta")
        _check_subset_budget(A.nrows, beta)
        ratio = norm_ratio_exact(A, b, x, beta)
        lhs_sum = 0.0
        worst = -np.inf
        count = 0
        for tau in combinations(range(A.nrows), beta):
            idx, lhs, _ = _bskm1_one_sample(A, b, x, x_star, r, err_sq, tau)
            lhs_sum += lhs
            worst = max(worst, bskm1_contraction_factor(A, idx, ratio, beta))
            count += 1
        return lhs_sum / count, worst * err_sq
    if method == "bskm2":
        if eta is None or beta_j is None:
            raise ValueError("bskm2 needs eta and beta_j")
        _tuple_budget(A.nrows, eta, beta_j)
        lhs_sum = 0.0
        worst = -np.inf
        count = 0
        for chunks in _disjoint_tuples(A.nrows, eta, beta_j):
            arrs = [np.asarray(c, dtype=np.int64) for c in chunks]
            idx, lhs, _ = _bskm2_one_tuple(A, b, x, x_star, r, err_sq, arrs)
            lhs_sum += lhs
            inf_vals = [float(np.max(r[c] ** 2)) for c in arrs]
            tau_h = arrs[int(np.argmin(inf_vals))]
            worst = max(worst, bskm2_contraction_factor(A, idx, tau_h, eta))
            count += 1
        return lhs_sum / count, worst * err_sq
    raise ValueError(f"unknown method {method!r}; expected 'bskm1' or 'bskm2'")


def build_bound_report(A: MatrixStore, b, x, beta=None, eta=None, beta_j=None) -> BoundReport:
    """Assemble the bound quantities the verify-bounds command prints."""
    spectral = gram_extreme_eigs(A.toarray())
    norm_ratio = None
    bskm1_factor = None
    bskm2_factor = None
    slack = []
    x_star = min_norm_solution(A, b)
    if beta is not None:
        norm_ratio = norm_ratio_exact(A, b, x, beta)
        worst = -np.inf
        for tau, lhs, rhs in bskm1_per_sample_bounds(A, b, x, beta, x_star=x_star):
            slack.append((f"tau={tau}", lhs, rhs))
            tau_arr = np.asarray(tau, dtype=np.int64)
            t_k, delta = argmax_violation(A, b, x, tau_arr)
            idx = bskm1_build_index_set(A, b, x, tau_arr, delta, t_k)
            worst = max(worst, bskm1_contraction_factor(A, idx, norm_ratio, beta))
        bskm1_factor = worst
    if eta is not None and beta_j is not None:
        r = _residual(A, b, x)
        worst = -np.inf
        for chunks, lhs, rhs in bskm2_per_tuple_bounds(A, b, x, eta, beta_j, x_star=x_star):
            slack.append((f"tuple={chunks}", lhs, rhs))
            arrs = [np.asarray(c, dtype=np.int64) for c in chunks]
            idx = bskm2_collect(A, b, x, arrs, residual=r)
            inf_vals = [float(np.max(r[c] ** 2)) for c in arrs]
            tau_h = arrs[int(np.argmin(inf_vals))]
            worst = max(worst, bskm2_contraction_factor(A, idx, tau_h, eta))
        bskm2_factor = worst
    return BoundReport(norm_ratio, bskm1_factor, bskm2_factor, slack, spectral)
