"""Block sampling Kaczmarz-Motzkin solvers and benchmark harness."""

from .bounds import (
    BoundReport,
    EnumerationLimitError,
    bskm1_contraction_factor,
    bskm1_per_sample_bounds,
    bskm2_contraction_factor,
    bskm2_per_tuple_bounds,
    build_bound_report,
    expected_contraction_exact,
    norm_ratio_exact,
)
from .matrices import (
    InconsistentSystemError,
    MatrixStore,
    SpectralSummary,
    gram_extreme_eigs,
    min_norm_least_squares,
    min_norm_solution,
    residual_entry,
    row_dot,
    row_space_basis,
)
from .solvers import (
    METHODS,
    IterateState,
    SolveReport,
    SolverConfig,
    argmax_violation,
    bskm1_build_index_set,
    bskm1_step,
    bskm2_collect,
    bskm2_select,
    bskm2_step,
    motzkin_step,
    pseudoinverse_free_step,
    rk_step,
    sample_uniform,
    skm_step,
    solve,
)
from .systems import (
    LinearSystem,
    MatrixMarketError,
    RunRecord,
    compute_res,
    density,
    generate_gaussian,
    load_system,
    parse_matrix_market,
    read_csv,
    write_csv,
    write_matrix_market,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
