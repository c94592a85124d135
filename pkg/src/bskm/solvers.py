"""Row-action solvers for consistent linear systems.

Six methods share one driver: RK (squared-norm row sampling), Motzkin
(globally most-violated row), SKM (most-violated row within a uniform sample
of beta rows), BSKM1 (threshold block built from the sampled maximum,
projected jointly), BSKM2 (eta disjoint sub-samples, one greedy row each,
projected jointly), and BSKM2-PF (same selection, pseudoinverse-free weighted
update). All steps are deterministic given the generator state; argmax ties
break to the smallest row index.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .matrices import MatrixStore, min_norm_least_squares, residual_entry
from .systems import LinearSystem

METHODS = ("rk", "motzkin", "skm", "bskm1", "bskm2", "bskm2-pf")
WEIGHTS_MODES = ("uniform", "row-norm-proportional")

TERM_CONVERGED = "converged"
TERM_ITERATION_CAP = "iteration-cap"
TERM_STAGNATION = "stagnation"

# error-metric blowup factor that triggers a stagnation abort
_DIVERGENCE_FACTOR = 1e6


@dataclass
class SolverConfig:
    """Method selector and tunables. Size-dependent checks run in validate()."""

    method: str = "skm"
    beta: int | None = None      # sample size for skm / bskm1
    eta: int | None = None       # sub-sample count for bskm2 / bskm2-pf
    beta_j: int | None = None    # per-sub-sample size; default floor(beta/eta), min 1
    weights_mode: str = "uniform"
    res_tol: float = 1e-6
    max_iters: int = 200_000
    seed: int = 0
    history_stride: int = 1

    def resolved_beta_j(self):
        if self.beta_j is not None:
            return self.beta_j
        if self.beta is not None and self.eta is not None:
            return max(1, self.beta // self.eta)
        return 1

    def validate(self, m):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.weights_mode not in WEIGHTS_MODES:
            raise ValueError(f"unknown weights_mode {self.weights_mode!r}")
        if self.res_tol <= 0:
            raise ValueError("res_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.history_stride < 1:
            raise ValueError("history_stride must be at least 1")
        if self.method in ("skm", "bskm1"):
            if self.beta is None:
                raise ValueError(f"method {self.method} requires beta")
            if not 1 <= self.beta <= m:
                raise ValueError(f"beta={self.beta} outside [1, m={m}]")
        if self.method in ("bskm2", "bskm2-pf"):
            if self.eta is None:
                raise ValueError(f"method {self.method} requires eta")
            bj = self.resolved_beta_j()
            if self.eta < 1 or bj < 1:
                raise ValueError("eta and beta_j must be at least 1")
            if self.eta * bj > m:
                raise ValueError(f"eta*beta_j = {self.eta * bj} exceeds m = {m}")


@dataclass
class IterateState:
    """Mutable per-run state: iterate, counter, optional residual cache, RNG."""

    x: np.ndarray
    k: int = 0
    full_residual: np.ndarray | None = None
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))


@dataclass
class SolveReport:
    iterations: int
    wall_time_s: float
    final_res: float
    res_history: list  # (iteration, metric value) pairs at the configured stride
    termination: str
    metric: str = "res"  # "res" needs x_ref; "relative-residual" is the opt-out fallback


def refresh_residual(state: IterateState, A: MatrixStore, b):
    """Recompute and cache b - A x for the current iterate."""
    state.full_residual = b - A.matvec(state.x)
    return state.full_residual


def sample_uniform(m, beta, rng):
    """beta distinct row indices, uniform over all (m choose beta) subsets.

    Returned sorted so that first-occurrence argmax breaks ties toward the
    smallest row index.
    """
    if not 1 <= beta <= m:
        raise ValueError(f"beta={beta} outside [1, m={m}]")
    return np.sort(rng.choice(m, size=beta, replace=False))


def argmax_violation(A: MatrixStore, b, x, tau, residual=None):
    """Most-violated row within tau: (row index, squared residual).

    Ties break to the smallest row index. ``residual`` may pass a precomputed
    full residual to avoid recomputation.
    """
    tau = np.sort(np.asarray(tau, dtype=np.int64))
    if tau.size == 0:
        raise ValueError("empty sample")
    if residual is not None:
        r_tau = residual[tau]
    else:
        r_tau = b[tau] - A.rows_matvec(tau, x)
    sq = r_tau * r_tau
    pos = int(np.argmax(sq))
    return int(tau[pos]), float(sq[pos])


def bskm1_build_index_set(A: MatrixStore, b, x, tau, delta, t_k, residual=None):
    """Rows outside tau whose squared residual reaches delta, plus t_k.

    Always nonempty, and always contains the smallest-index global argmax row.
    """
    r = residual if residual is not None else b - A.matvec(x)
    mask = r * r >= delta
    mask[np.asarray(tau, dtype=np.int64)] = False
    mask[t_k] = True
    return np.flatnonzero(mask)


def _project_row(state, A, b, i):
    c = residual_entry(A, b, state.x, i) / A.row_sq_norms[i]
    A.add_scaled_row(state.x, i, c)


def _project_block(state, A, idx, rhs):
    # exact joint enforcement of the selected constraints (minimum-norm move)
    d = min_norm_least_squares(A.take_rows(idx), rhs)
    state.x += d


def skm_step(state: IterateState, A: MatrixStore, b, cfg: SolverConfig):
    """Single-row projection onto the most-violated row of a fresh sample."""
    tau = sample_uniform(A.nrows, cfg.beta, state.rng)
    t_k, _ = argmax_violation(A, b, state.x, tau)
    _project_row(state, A, b, t_k)
    state.full_residual = None
    state.k += 1
    return state


def motzkin_step(state: IterateState, A: MatrixStore, b):
    """Projection onto the globally most-violated row."""
    r = refresh_residual(state, A, b)
    t = int(np.argmax(r * r))
    _project_row(state, A, b, t)
    state.full_residual = None
    state.k += 1
    return state


def rk_step(state: IterateState, A: MatrixStore, b):
    """Projection onto a row drawn with squared-norm-proportional probability."""
    probs = A.row_sq_norms / A.row_sq_norms.sum()
    i = int(state.rng.choice(A.nrows, p=probs))
    _project_row(state, A, b, i)
    state.full_residual = None
    state.k += 1
    return state


def bskm1_step(state: IterateState, A: MatrixStore, b, cfg: SolverConfig):
    """Joint projection onto the threshold index set seeded by a sampled max."""
    r = refresh_residual(state, A, b)
    tau = sample_uniform(A.nrows, cfg.beta, state.rng)
    t_k, delta = argmax_violation(A, b, state.x, tau, residual=r)
    idx = bskm1_build_index_set(A, b, state.x, tau, delta, t_k, residual=r)
    _project_block(state, A, idx, r[idx])
    state.full_residual = None
    state.k += 1
    return state


def bskm2_select(m, eta, beta_j, rng):
    """eta mutually disjoint sub-samples of beta_j rows each.

    One ordered without-replacement draw of eta*beta_j rows, chunked, is
    distributionally identical to drawing the sub-samples sequentially.
    """
    if eta < 1 or beta_j < 1:
        raise ValueError("eta and beta_j must be at least 1")
    if eta * beta_j > m:
        raise ValueError(f"eta*beta_j = {eta * beta_j} exceeds m = {m}")
    drawn = rng.choice(m, size=eta * beta_j, replace=False)
    return list(np.sort(drawn.reshape(eta, beta_j), axis=1))


def bskm2_collect(A: MatrixStore, b, x, chunks, residual=None):
    """Per-sub-sample most-violated rows, as a sorted index array.

    Ties break to the smallest row index inside each (sorted) sub-sample.
    """
    sizes = {len(c) for c in chunks}
    if len(sizes) == 1:
        rows = np.vstack(chunks)
        if residual is not None:
            r_rows = residual[rows.ravel()]
        else:
            flat = rows.ravel()
            r_rows = b[flat] - A.rows_matvec(flat, x)
        sq = (r_rows * r_rows).reshape(rows.shape)
        picks = rows[np.arange(rows.shape[0]), np.argmax(sq, axis=1)]
        return np.sort(picks.astype(np.int64))
    picks = []
    for chunk in chunks:
        chunk = np.asarray(chunk, dtype=np.int64)
        if residual is not None:
            r_c = residual[chunk]
        else:
            r_c = b[chunk] - A.rows_matvec(chunk, x)
        picks.append(int(chunk[int(np.argmax(r_c * r_c))]))
    return np.sort(np.asarray(picks, dtype=np.int64))


def bskm2_step(state: IterateState, A: MatrixStore, b, cfg: SolverConfig):
    """Joint projection onto the greedy rows of eta disjoint sub-samples."""
    beta_j = cfg.resolved_beta_j()
    chunks = bskm2_select(A.nrows, cfg.eta, beta_j, state.rng)
    if 2 * cfg.eta * beta_j >= A.nrows:
        # sub-samples cover most rows: one full residual beats gathering them
        r = refresh_residual(state, A, b)
        idx = bskm2_collect(A, b, state.x, chunks, residual=r)
        rhs = r[idx]
    else:
        idx = bskm2_collect(A, b, state.x, chunks)
        rhs = b[idx] - A.rows_matvec(idx, state.x)
    _project_block(state, A, idx, rhs)
    state.full_residual = None
    state.k += 1
    return state


def pseudoinverse_free_step(state: IterateState, A: MatrixStore, b, cfg: SolverConfig, I):
    """Weighted sum of single-row projection directions over the index set I."""
    idx = np.sort(np.asarray(I, dtype=np.int64))
    if idx.size == 0:
        raise ValueError("empty index set")
    r_idx = b[idx] - A.rows_matvec(idx, state.x)
    norms = A.row_sq_norms[idx]
    if cfg.weights_mode == "uniform":
        w = np.full(idx.size, 1.0 / idx.size)
    else:
        w = norms / norms.sum()
    state.x += A.take_rows(idx).T @ (w * r_idx / norms)
    state.full_residual = None
    state.k += 1
    return state


def _bskm2_pf_step(state, A, b, cfg):
    chunks = bskm2_select(A.nrows, cfg.eta, cfg.resolved_beta_j(), state.rng)
    idx = bskm2_collect(A, b, state.x, chunks)
    return pseudoinverse_free_step(state, A, b, cfg, idx)


def _make_stepper(method, A, b, cfg):
    if method == "rk":
        return lambda st: rk_step(st, A, b)
    if method == "motzkin":
        return lambda st: motzkin_step(st, A, b)
    if method == "skm":
        return lambda st: skm_step(st, A, b, cfg)
    if method == "bskm1":
        return lambda st: bskm1_step(st, A, b, cfg)
    if method == "bskm2":
        return lambda st: bskm2_step(st, A, b, cfg)
    return lambda st: _bskm2_pf_step(st, A, b, cfg)


def solve(system: LinearSystem, cfg: SolverConfig, use_reference=True) -> SolveReport:
    """Run the configured method from x0 = 0 under the stopping protocol.

    Stops when the relative solution error RES = ||x_k - x_ref||^2 /
    ||x_ref||^2 drops below ``cfg.res_tol`` or the iteration cap is reached.
    With ``use_reference=False`` (large systems where the reference solve is
    unwanted) stopping falls back to the relative residual ||Ax - b|| / ||b||
    and the report is labeled accordingly. Wall time covers the iteration
    loop only.
    """
    A, b = system.A, system.b
    cfg.validate(A.nrows)

    if use_reference:
        x_ref = system.ensure_reference()
        ref_sq = float(x_ref @ x_ref)
        if ref_sq == 0.0:
            # b = 0: the start vector already solves the system
            return SolveReport(0, 0.0, 0.0, [(0, 0.0)], TERM_CONVERGED, metric="res")
        metric = "res"

        def measure(x):
            d = x - x_ref
            return float(d @ d) / ref_sq

    else:
        b_norm = float(np.linalg.norm(b))
        scale = b_norm if b_norm > 0 else 1.0
        metric = "relative-residual"

        def measure(x):
            return float(np.linalg.norm(b - A.matvec(x))) / scale

    state = IterateState(x=np.zeros(A.ncols), rng=np.random.default_rng(cfg.seed))
    stepper = _make_stepper(cfg.method, A, b, cfg)

    val = measure(state.x)
    history = [(0, val)]
    initial = val
    if val < cfg.res_tol:
        return SolveReport(0, 0.0, val, history, TERM_CONVERGED, metric=metric)

    termination = TERM_ITERATION_CAP
    start = time.perf_counter()
    while state.k < cfg.max_iters:
        stepper(state)
        val = measure(state.x)
        if state.k % cfg.history_stride == 0:
            history.append((state.k, val))
        if val < cfg.res_tol:
            termination = TERM_CONVERGED
            break
        if val > _DIVERGENCE_FACTOR * initial:
            termination = TERM_STAGNATION
            break
    wall = time.perf_counter() - start

    if history[-1][0] != state.k:
        history.append((state.k, val))
    return SolveReport(
        iterations=state.k,
        wall_time_s=wall,
        final_res=val,
        res_history=history,
        termination=termination,
        metric=metric,
    )
