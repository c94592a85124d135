from collections import Counter

import numpy as np
import pytest

from bskm.matrices import MatrixStore, row_space_basis
from bskm.solvers import (
    IterateState,
    SolverConfig,
    argmax_violation,
    bskm1_build_index_set,
    bskm1_step,
    bskm2_collect,
    bskm2_select,
    bskm2_step,
    motzkin_step,
    pseudoinverse_free_step,
    refresh_residual,
    rk_step,
    sample_uniform,
    skm_step,
    solve,
)
from bskm.systems import LinearSystem, generate_gaussian


def identity_system(b):
    b = np.asarray(b, dtype=float)
    return MatrixStore.from_dense(np.eye(len(b))), b


def state_at(x, seed=0):
    return IterateState(x=np.asarray(x, dtype=float).copy(), rng=np.random.default_rng(seed))


# -- sampling -----------------------------------------------------------------

def test_sample_full_set_is_everything():
    rng = np.random.default_rng(0)
    assert sample_uniform(3, 3, rng).tolist() == [0, 1, 2]


def test_sample_rejects_bad_beta():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_uniform(5, 0, rng)
    with pytest.raises(ValueError):
        sample_uniform(5, 6, rng)


def test_sample_subsets_uniform_frequency():
    rng = np.random.default_rng(123)
    counts = Counter(tuple(sample_uniform(4, 2, rng)) for _ in range(10_000))
    assert len(counts) == 6
    for subset, count in counts.items():
        assert abs(count / 10_000 - 1 / 6) < 0.02, subset


# -- greedy selection -----------------------------------------------------------

def test_argmax_violation_examples():
    A, b = identity_system([1.0, 2.0, 3.0])
    assert argmax_violation(A, b, np.zeros(3), [0, 1, 2]) == (2, 9.0)
    assert argmax_violation(A, b, np.zeros(3), [0, 1]) == (1, 4.0)
    A2, b2 = identity_system([5.0, 5.0])
    assert argmax_violation(A2, b2, np.zeros(2), [0, 1]) == (0, 25.0)  # tie -> smallest


def test_argmax_violation_rejects_empty_sample():
    A, b = identity_system([1.0])
    with pytest.raises(ValueError):
        argmax_violation(A, b, np.zeros(1), [])


def test_index_set_collects_rows_at_or_above_threshold():
    A, b = identity_system([1.0, 2.0, 3.0])
    idx = bskm1_build_index_set(A, b, np.zeros(3), np.array([0, 1]), 4.0, 1)
    assert idx.tolist() == [1, 2]


def test_index_set_can_be_singleton():
    A, b = identity_system([3.0, 2.0, 1.0])
    idx = bskm1_build_index_set(A, b, np.zeros(3), np.array([0]), 9.0, 0)
    assert idx.tolist() == [0]


def test_index_set_matches_brute_force_definition():
    rng = np.random.default_rng(8)
    for _ in range(25):
        system = generate_gaussian(8, 3, seed=int(rng.integers(1 << 30)))
        x = rng.standard_normal(3)
        tau = sample_uniform(8, 3, rng)
        t_k, delta = argmax_violation(system.A, system.b, x, tau)
        idx = bskm1_build_index_set(system.A, system.b, x, tau, delta, t_k)
        r = system.b - system.A.matvec(x)
        expected = sorted(set(h for h in range(8) if h not in tau and r[h] ** 2 >= delta) | {t_k})
        assert idx.tolist() == expected
        # the smallest-index global argmax always lands in the set
        assert int(np.argmax(r * r)) in idx


# -- single-row steps --------------------------------------------------------------

def test_skm_step_tie_projects_first_row():
    A, b = identity_system([1.0, 1.0])
    st = state_at(np.zeros(2))
    skm_step(st, A, b, SolverConfig(method="skm", beta=2))
    np.testing.assert_allclose(st.x, [1.0, 0.0])
    assert st.k == 1


def test_skm_step_projection_formula():
    A = MatrixStore.from_dense([[2.0, 0.0]])
    st = state_at(np.zeros(2))
    skm_step(st, A, np.array([6.0]), SolverConfig(method="skm", beta=1))
    np.testing.assert_allclose(st.x, [3.0, 0.0])


def test_skm_full_sample_equals_motzkin_step():
    system = generate_gaussian(6, 3, seed=4)
    x0 = np.random.default_rng(1).standard_normal(3)
    st_skm, st_mot = state_at(x0), state_at(x0)
    skm_step(st_skm, system.A, system.b, SolverConfig(method="skm", beta=6))
    motzkin_step(st_mot, system.A, system.b)
    np.testing.assert_allclose(st_skm.x, st_mot.x, atol=1e-14)


def test_motzkin_step_picks_global_argmax():
    A, b = identity_system([1.0, 2.0, 3.0])
    st = state_at(np.zeros(3))
    motzkin_step(st, A, b)
    np.testing.assert_allclose(st.x, [0.0, 0.0, 3.0])


def test_motzkin_step_noop_at_solution():
    A, b = identity_system([1.0, 2.0])
    st = state_at(b)
    motzkin_step(st, A, b)
    np.testing.assert_allclose(st.x, b)


def test_rk_frequencies_proportional_to_row_norms():
    A, b = identity_system([1.0, 1.0])
    counts = Counter()
    st = state_at(np.zeros(2), seed=99)
    for _ in range(10_000):
        st.x[:] = 0.0
        rk_step(st, A, b)
        counts[int(np.argmax(st.x != 0.0))] += 1
    for i in (0, 1):
        assert abs(counts[i] / 10_000 - 0.5) < 0.02


def test_rk_single_row_system_matches_skm():
    A = MatrixStore.from_dense([[2.0, 1.0]])
    b = np.array([5.0])
    st_rk, st_skm = state_at(np.zeros(2)), state_at(np.zeros(2))
    rk_step(st_rk, A, b)
    skm_step(st_skm, A, b, SolverConfig(method="skm", beta=1))
    np.testing.assert_allclose(st_rk.x, st_skm.x, atol=1e-15)


# -- block steps ----------------------------------------------------------------

def test_bskm1_step_full_sample_tie_only_projects_argmax():
    # with tau = all rows the outside-threshold set is empty: block is {t_k}
    A, b = identity_system([1.0, 1.0])
    st = state_at(np.zeros(2))
    bskm1_step(st, A, b, SolverConfig(method="bskm1", beta=2))
    np.testing.assert_allclose(st.x, [1.0, 0.0])


def test_bskm1_block_update_forced_sample():
    A, b = identity_system([1.0, 2.0, 3.0])
    x = np.zeros(3)
    tau = np.array([0, 1])
    t_k, delta = argmax_violation(A, b, x, tau)
    idx = bskm1_build_index_set(A, b, x, tau, delta, t_k)
    assert idx.tolist() == [1, 2]
    from bskm.matrices import min_norm_least_squares

    x1 = x + min_norm_least_squares(A.take_rows(idx), b[idx] - A.rows_matvec(idx, x))
    np.testing.assert_allclose(x1, [0.0, 2.0, 3.0], atol=1e-14)


def test_bskm1_one_step_dominates_skm_with_shared_sample():
    system = generate_gaussian(10, 4, seed=77)
    x_star = system.ensure_reference()
    rng = np.random.default_rng(5)
    tau = sample_uniform(10, 3, rng)
    t_k, delta = argmax_violation(system.A, system.b, np.zeros(4), tau)
    # SKM branch
    st_skm = state_at(np.zeros(4))
    from bskm.solvers import _project_row

    _project_row(st_skm, system.A, system.b, t_k)
    # block branch on the same sample
    idx = bskm1_build_index_set(system.A, system.b, np.zeros(4), tau, delta, t_k)
    from bskm.matrices import min_norm_least_squares

    x_blk = min_norm_least_squares(system.A.take_rows(idx), system.b[idx])
    lhs = np.sum((x_blk - x_star) ** 2)
    rhs = np.sum((st_skm.x - x_star) ** 2)
    assert lhs <= rhs + 1e-12


def test_bskm2_reduces_to_motzkin_for_single_full_subsample():
    system = generate_gaussian(7, 3, seed=2)
    x0 = np.random.default_rng(3).standard_normal(3)
    st_b, st_m = state_at(x0, seed=10), state_at(x0, seed=10)
    for _ in range(5):
        bskm2_step(st_b, system.A, system.b, SolverConfig(method="bskm2", eta=1, beta_j=7))
        motzkin_step(st_m, system.A, system.b)
        np.testing.assert_allclose(st_b.x, st_m.x, atol=1e-12)


def test_bskm2_forced_chunks():
    A, b = identity_system([1.0, 2.0, 3.0, 4.0])
    x = np.zeros(4)
    chunks = [np.array([0, 1]), np.array([2, 3])]
    idx = bskm2_collect(A, b, x, chunks)
    assert idx.tolist() == [1, 3]
    from bskm.matrices import min_norm_least_squares

    x1 = x + min_norm_least_squares(A.take_rows(idx), b[idx])
    np.testing.assert_allclose(x1, [0.0, 2.0, 0.0, 4.0], atol=1e-14)


def test_bskm2_selection_matches_brute_force_and_is_disjoint():
    system = generate_gaussian(12, 4, seed=6)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4)
    chunks = bskm2_select(12, 3, 2, rng)
    seen = np.concatenate(chunks)
    assert len(set(seen.tolist())) == 6  # mutually disjoint
    idx = bskm2_collect(system.A, system.b, x, chunks)
    r = system.b - system.A.matvec(x)
    expected = sorted(int(c[int(np.argmax(r[c] ** 2))]) for c in chunks)
    assert idx.tolist() == expected


def test_bskm2_select_budget_checked():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        bskm2_select(5, 3, 2, rng)


def test_block_constraints_satisfied_after_block_steps():
    system = generate_gaussian(30, 6, seed=12)
    scale = 1e-10 * (1 + np.max(np.abs(system.b)))
    st = state_at(np.zeros(6), seed=4)
    for _ in range(10):
        r = refresh_residual(st, system.A, system.b)
        tau = sample_uniform(30, 5, st.rng)
        t_k, delta = argmax_violation(system.A, system.b, st.x, tau, residual=r)
        idx = bskm1_build_index_set(system.A, system.b, st.x, tau, delta, t_k, residual=r)
        from bskm.matrices import min_norm_least_squares

        st.x += min_norm_least_squares(system.A.take_rows(idx), r[idx])
        gap = system.A.rows_matvec(idx, st.x) - system.b[idx]
        assert np.max(np.abs(gap)) <= scale


# -- pseudoinverse-free update -----------------------------------------------------

def test_pf_single_row_equals_projection():
    system = generate_gaussian(5, 3, seed=1)
    st_pf, st_ref = state_at(np.zeros(3)), state_at(np.zeros(3))
    pseudoinverse_free_step(st_pf, system.A, system.b, SolverConfig(method="bskm2-pf", eta=1), [2])
    from bskm.solvers import _project_row

    _project_row(st_ref, system.A, system.b, 2)
    np.testing.assert_allclose(st_pf.x, st_ref.x, atol=1e-14)


def test_pf_uniform_weights_average_directions():
    A, b = identity_system([1.0, 1.0])
    st = state_at(np.zeros(2))
    pseudoinverse_free_step(st, A, b, SolverConfig(method="bskm2-pf", eta=2), [0, 1])
    np.testing.assert_allclose(st.x, [0.5, 0.5])


def test_pf_row_norm_weights_sum_to_one_effect():
    A = MatrixStore.from_dense([[2.0, 0.0], [0.0, 1.0]])
    b = np.array([2.0, 1.0])
    st = state_at(np.zeros(2))
    cfg = SolverConfig(method="bskm2-pf", eta=2, weights_mode="row-norm-proportional")
    pseudoinverse_free_step(st, A, b, cfg, [0, 1])
    np.testing.assert_allclose(st.x, [0.8, 0.2])  # weights 4/5, 1/5 on unit directions


def test_pf_error_norm_never_increases():
    system = generate_gaussian(10, 4, seed=3)
    x_star = system.ensure_reference()
    rng = np.random.default_rng(7)
    cfg = SolverConfig(method="bskm2-pf", eta=3)
    st = state_at(np.zeros(4), seed=11)
    for _ in range(50):
        before = np.linalg.norm(st.x - x_star)
        idx = rng.choice(10, size=3, replace=False)
        pseudoinverse_free_step(st, system.A, system.b, cfg, idx)
        after = np.linalg.norm(st.x - x_star)
        assert after <= before + 1e-12


def test_pf_rejects_empty_index_set():
    system = generate_gaussian(4, 2, seed=0)
    with pytest.raises(ValueError):
        pseudoinverse_free_step(state_at(np.zeros(2)), system.A, system.b,
                                SolverConfig(method="bskm2-pf", eta=1), [])


# -- per-step invariants ------------------------------------------------------------

def test_residual_cache_matches_recomputation():
    system = generate_gaussian(20, 5, seed=9)
    st = state_at(np.random.default_rng(2).standard_normal(5))
    r = refresh_residual(st, system.A, system.b)
    fresh = system.b - system.A.matvec(st.x)
    assert np.linalg.norm(r - fresh) <= 1e-10 * (1 + np.linalg.norm(fresh))


def test_projection_steps_satisfy_pythagoras_and_monotonicity():
    system = generate_gaussian(40, 8, seed=15)
    x_star = system.ensure_reference()
    steppers = {
        "rk": lambda st: rk_step(st, system.A, system.b),
        "motzkin": lambda st: motzkin_step(st, system.A, system.b),
        "skm": lambda st: skm_step(st, system.A, system.b, SolverConfig(method="skm", beta=10)),
        "bskm1": lambda st: bskm1_step(st, system.A, system.b, SolverConfig(method="bskm1", beta=10)),
        "bskm2": lambda st: bskm2_step(st, system.A, system.b,
                                       SolverConfig(method="bskm2", eta=4, beta_j=3)),
    }
    for name, stepper in steppers.items():
        st = state_at(np.zeros(8), seed=21)
        for _ in range(25):
            before = st.x.copy()
            err_before = np.sum((before - x_star) ** 2)
            stepper(st)
            err_after = np.sum((st.x - x_star) ** 2)
            move = np.sum((st.x - before) ** 2)
            assert err_after <= err_before + 1e-12, name
            assert err_after == pytest.approx(err_before - move, rel=1e-9, abs=1e-12), name


def test_iterates_stay_in_row_space():
    rng = np.random.default_rng(3)
    arr = rng.standard_normal((12, 5))
    arr[:, 4] = 0.0  # row space misses the last coordinate
    A = MatrixStore.from_dense(arr)
    x_true = rng.standard_normal(5)
    system = LinearSystem(A=A, b=A.matvec(x_true))
    basis = row_space_basis(A)
    for cfg in (SolverConfig(method="skm", beta=4, seed=2),
                SolverConfig(method="bskm1", beta=4, seed=2),
                SolverConfig(method="bskm2", eta=3, beta_j=2, seed=2)):
        st = state_at(np.zeros(5), seed=cfg.seed)
        stepper = {"skm": skm_step, "bskm1": bskm1_step, "bskm2": bskm2_step}[cfg.method]
        for _ in range(20):
            stepper(st, system.A, system.b, cfg)
            orth = st.x - basis @ (basis.T @ st.x)
            assert np.linalg.norm(orth) <= 1e-9


# -- driver ---------------------------------------------------------------------

def test_solve_bskm1_tied_identity_takes_two_iterations():
    system = LinearSystem(A=MatrixStore.from_dense(np.eye(2)), b=np.array([1.0, 1.0]))
    report = solve(system, SolverConfig(method="bskm1", beta=2))
    assert report.termination == "converged"
    assert report.iterations == 2  # full-sample block is {t_k}; ties stay single-row


def test_solve_bskm2_identity_one_iteration():
    system = LinearSystem(A=MatrixStore.from_dense(np.eye(2)), b=np.array([1.0, 1.0]))
    report = solve(system, SolverConfig(method="bskm2", eta=2, beta_j=1))
    assert report.termination == "converged"
    assert report.iterations == 1


def test_solve_motzkin_identity_two_iterations():
    system = LinearSystem(A=MatrixStore.from_dense(np.eye(2)), b=np.array([1.0, 1.0]))
    report = solve(system, SolverConfig(method="motzkin"))
    assert report.termination == "converged"
    assert report.iterations == 2
    assert report.res_history[0] == (0, 1.0)


def test_solve_zero_rhs_converges_immediately():
    system = LinearSystem(A=MatrixStore.from_dense(np.eye(2)), b=np.zeros(2))
    report = solve(system, SolverConfig(method="motzkin"))
    assert report.iterations == 0
    assert report.termination == "converged"


def test_block_methods_need_fewer_iterations_than_skm():
    iters = {"skm": [], "bskm1": [], "bskm2": []}
    for seed in range(5):
        system = generate_gaussian(1000, 100, seed=seed)
        system.ensure_reference()
        for method in iters:
            cfg = SolverConfig(
                method=method,
                beta=100 if method in ("skm", "bskm1") else None,
                eta=100 if method == "bskm2" else None,
                seed=seed,
                history_stride=1000,
            )
            iters[method].append(solve(system, cfg).iterations)
    assert np.median(iters["bskm1"]) < np.median(iters["skm"])
    assert np.median(iters["bskm2"]) < np.median(iters["skm"])


def test_solve_history_stride_respected():
    system = generate_gaussian(60, 6, seed=2)
    report = solve(system, SolverConfig(method="skm", beta=10, history_stride=5, seed=3))
    ks = [k for k, _ in report.res_history]
    assert ks[0] == 0
    assert all(k % 5 == 0 for k in ks[:-1])
    assert ks[-1] == report.iterations


def test_solve_fallback_metric_labelled():
    system = generate_gaussian(40, 5, seed=8)
    report = solve(system, SolverConfig(method="skm", beta=10, seed=1), use_reference=False)
    assert report.metric == "relative-residual"
    assert report.termination == "converged"
    assert system.x_ref is None  # the reference solve never ran


def test_solve_stagnation_on_bad_reference():
    # a deliberately wrong tiny reference makes RES blow up once x approaches
    # the true solution; the driver must bail out with reason "stagnation"
    system = generate_gaussian(30, 4, seed=4)
    system.x_ref = 1e-9 * np.ones(4)
    report = solve(system, SolverConfig(method="motzkin"))
    assert report.termination == "stagnation"
    assert report.final_res > 1e6


def test_solver_config_validation():
    system = generate_gaussian(10, 3, seed=0)
    with pytest.raises(ValueError):
        solve(system, SolverConfig(method="skm"))  # beta missing
    with pytest.raises(ValueError):
        solve(system, SolverConfig(method="skm", beta=11))
    with pytest.raises(ValueError):
        solve(system, SolverConfig(method="bskm2"))  # eta missing
    with pytest.raises(ValueError):
        solve(system, SolverConfig(method="bskm2", eta=6, beta_j=2))  # 12 > m
    with pytest.raises(ValueError):
        solve(system, SolverConfig(method="nope"))
    with pytest.raises(ValueError):
        solve(system, SolverConfig(method="skm", beta=2, res_tol=0.0))


def test_bskm2_beta_j_default_resolution():
    assert SolverConfig(method="bskm2", beta=100, eta=10).resolved_beta_j() == 10
    assert SolverConfig(method="bskm2", beta=5, eta=10).resolved_beta_j() == 1
    assert SolverConfig(method="bskm2", eta=10).resolved_beta_j() == 1
    assert SolverConfig(method="bskm2", eta=10, beta_j=3).resolved_beta_j() == 3
