"""Problem ingestion, reference solutions and CSV run records.

Systems come from Matrix Market files or seeded Gaussian generation. The
relative solution error (RES) used for stopping needs the minimum-norm
solution as a reference; ``LinearSystem.ensure_reference`` prepares it once
per system.
"""

import csv
from dataclasses import dataclass, fields

import numpy as np

from .matrices import CSR, DENSE, MatrixStore, min_norm_solution


class MatrixMarketError(ValueError):
    """Parse failure; carries the 1-based line number of the offending line."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class LinearSystem:
    """A consistent system A x = b plus optional reference solutions."""

    A: MatrixStore
    b: np.ndarray
    x_ref: np.ndarray | None = None       # minimum-norm solution, for RES
    x_star_gen: np.ndarray | None = None  # generating vector of synthetic systems
    source: str = "unknown"

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.b.shape != (self.A.nrows,):
            raise ValueError(f"b has shape {self.b.shape}, expected ({self.A.nrows},)")
        zero_rows = np.flatnonzero(self.A.row_sq_norms == 0.0)
        if zero_rows.size:
            raise ValueError(
                f"matrix has {zero_rows.size} zero row(s) (first: {int(zero_rows[0])}); "
                "row projections divide by the row norm, remove them before solving"
            )

    @property
    def m(self):
        return self.A.nrows

    @property
    def n(self):
        return self.A.ncols

    def ensure_reference(self):
        """Compute and cache x_ref = the minimum-norm solution.

        Synthetic systems with m >= n are full column rank almost surely, so
        the generating vector is the unique (hence minimum-norm) solution and
        is reused directly; anything else is solved from scratch.
        """
        if self.x_ref is not None:
            return self.x_ref
        if self.x_star_gen is not None and self.m >= self.n:
            candidate = self.x_star_gen
            bnorm = np.linalg.norm(self.b)
            if np.linalg.norm(self.b - self.A.matvec(candidate)) <= 1e-10 * max(bnorm, 1e-300):
                self.x_ref = candidate
                return self.x_ref
        self.x_ref = min_norm_solution(self.A, self.b)
        return self.x_ref


def generate_gaussian(m, n, seed) -> LinearSystem:
    """Random system: standard-normal A and x_star, b = A @ x_star."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    rng = np.random.default_rng(seed)
    A = MatrixStore.from_dense(rng.standard_normal((m, n)))
    x_star = rng.standard_normal(n)
    b = A.matvec(x_star)
    return LinearSystem(A=A, b=b, x_star_gen=x_star, source=f"gaussian({m},{n},seed={seed})")


def compute_res(x, x_ref):
    """Relative solution error ||x - x_ref||^2 / ||x_ref||^2."""
    x_ref = np.asarray(x_ref)
    denom = float(x_ref @ x_ref)
    if denom == 0.0:
        raise ValueError("reference solution is zero; RES undefined")
    diff = np.asarray(x) - x_ref
    return float(diff @ diff) / denom


# -- Matrix Market ------------------------------------------------------

_HEADER_PREFIX = "%%matrixmarket"


def parse_matrix_market(path) -> MatrixStore:
    """Parse a Matrix Market file into a MatrixStore.

    Coordinate real/pattern and array real formats, general or symmetric
    symmetry (symmetric inputs are expanded). 1-based indices become 0-based;
    duplicate coordinate entries are summed. Errors carry line numbers.
    """
    with open(path, "r", encoding="utf-8") as fh:
        return _parse_mm_lines(fh)


def _parse_mm_lines(fh) -> MatrixStore:
    header = fh.readline()
    if not header:
        raise MatrixMarketError(1, "empty file")
    tokens = header.strip().lower().split()
    if len(tokens) != 5 or tokens[0] != _HEADER_PREFIX or tokens[1] != "matrix":
        raise MatrixMarketError(1, f"malformed header: {header.strip()!r}")
    fmt, field_type, symmetry = tokens[2], tokens[3], tokens[4]
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(1, f"unsupported format {fmt!r}")
    if field_type not in ("real", "pattern"):
        raise MatrixMarketError(1, f"unsupported field {field_type!r}")
    if fmt == "array" and field_type == "pattern":
        raise MatrixMarketError(1, "pattern field is only valid for coordinate format")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(1, f"unsupported symmetry {symmetry!r}")

    line_no = 1
    size_line = None
    for line in fh:
        line_no += 1
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        size_line = (line_no, stripped)
        break
    if size_line is None:
        raise MatrixMarketError(line_no, "missing size line")

    if fmt == "coordinate":
        return _parse_coordinate(fh, size_line, field_type, symmetry)
    return _parse_array(fh, size_line, symmetry)


def _ints(parts, line_no):
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise MatrixMarketError(line_no, f"expected integers, got {' '.join(parts)!r}") from None


def _parse_coordinate(fh, size_line, field_type, symmetry) -> MatrixStore:
    line_no, stripped = size_line
    parts = stripped.split()
    if len(parts) != 3:
        raise MatrixMarketError(line_no, f"size line must be 'rows cols nnz', got {stripped!r}")
    nrows, ncols, nnz = _ints(parts, line_no)
    if nrows < 0 or ncols < 0 or nnz < 0:
        raise MatrixMarketError(line_no, "negative size")
    want_value = field_type == "real"
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    count = 0
    for line in fh:
        line_no += 1
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        parts = stripped.split()
        if want_value:
            if len(parts) != 3:
                raise MatrixMarketError(line_no, f"expected 'i j value', got {stripped!r}")
            i, j = _ints(parts[:2], line_no)
            try:
                v = float(parts[2])
            except ValueError:
                raise MatrixMarketError(line_no, f"bad value {parts[2]!r}") from None
        else:
            if len(parts) != 2:
                raise MatrixMarketError(line_no, f"expected 'i j', got {stripped!r}")
            i, j = _ints(parts, line_no)
            v = 1.0
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(
                line_no, f"entry ({i}, {j}) outside declared {nrows} x {ncols} bounds"
            )
        if count >= nnz:
            raise MatrixMarketError(line_no, f"more than the declared {nnz} entries")
        rows[count] = i - 1
        cols[count] = j - 1
        vals[count] = v
        count += 1
    if count != nnz:
        raise MatrixMarketError(line_no + 1, f"declared {nnz} entries but file has {count}")
    if symmetry == "symmetric":
        off_diag = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off_diag]]),
            np.concatenate([cols, rows[off_diag]]),
            np.concatenate([vals, vals[off_diag]]),
        )
    return MatrixStore.from_coo(rows, cols, vals, (nrows, ncols))


def _parse_array(fh, size_line, symmetry) -> MatrixStore:
    line_no, stripped = size_line
    parts = stripped.split()
    if len(parts) != 2:
        raise MatrixMarketError(line_no, f"size line must be 'rows cols', got {stripped!r}")
    nrows, ncols = _ints(parts, line_no)
    expected = nrows * ncols if symmetry == "general" else nrows * (nrows + 1) // 2
    if symmetry == "symmetric" and nrows != ncols:
        raise MatrixMarketError(line_no, "symmetric array matrix must be square")
    values = np.empty(expected, dtype=np.float64)
    count = 0
    for line in fh:
        line_no += 1
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        try:
            v = float(stripped)
        except ValueError:
            raise MatrixMarketError(line_no, f"bad value {stripped!r}") from None
        if count >= expected:
            raise MatrixMarketError(line_no, f"more than the expected {expected} entries")
        values[count] = v
        count += 1
    if count != expected:
        raise MatrixMarketError(line_no + 1, f"expected {expected} entries but file has {count}")
    dense = np.empty((nrows, ncols))
    if symmetry == "general":
        dense[:] = values.reshape((ncols, nrows)).T  # array format is column-major
    else:
        k = 0
        for j in range(ncols):  # lower triangle, column by column
            run = nrows - j
            dense[j:, j] = values[k : k + run]
            dense[j, j:] = values[k : k + run]
            k += run
    return MatrixStore.from_dense(dense)


def write_matrix_market(A: MatrixStore, path, comment=None):
    """Serialize a store in coordinate (CSR) or array (dense) format."""
    with open(path, "w", encoding="utf-8") as fh:
        if A.layout == CSR:
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            if comment:
                fh.write(f"%{comment}\n")
            mat = A.scipy_csr().tocoo()
            fh.write(f"{A.nrows} {A.ncols} {mat.nnz}\n")
            for i, j, v in zip(mat.row, mat.col, mat.data):
                fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
        else:
            fh.write("%%MatrixMarket matrix array real general\n")
            if comment:
                fh.write(f"%{comment}\n")
            fh.write(f"{A.nrows} {A.ncols}\n")
            for j in range(A.ncols):
                for i in range(A.nrows):
                    fh.write(f"{A.values[i, j]:.17g}\n")


def density(A: MatrixStore):
    """Fraction of stored nonzero entries, as in sparse-collection tables."""
    return A.nnz / (A.nrows * A.ncols)


def load_system(path) -> LinearSystem:
    """Matrix from a Matrix Market file, b synthesized from a seeded x_star."""
    A = parse_matrix_market(path)
    rng = np.random.default_rng(0)
    x_star = rng.standard_normal(A.ncols)
    b = A.matvec(x_star)
    return LinearSystem(A=A, b=b, x_star_gen=x_star, source=f"matrix-market({path})")


# -- run records ---------------------------------------------------------

@dataclass
class RunRecord:
    """One solver run at one parameter point; the CSV row schema."""

    method: str
    m: int
    n: int
    beta: int | None
    eta: int | None
    beta_j: int | None
    seed: int
    trial: int
    iterations: int
    cpu_time_s: float
    final_res: float
    termination: str


CSV_COLUMNS = [f.name for f in fields(RunRecord)]


def _format_field(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(records, path):
    """Header then one line per record, floats at 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([_format_field(getattr(rec, c)) for c in CSV_COLUMNS])


def read_csv(path):
    """Inverse of write_csv (used by round-trip tests and downstream plots)."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns: {reader.fieldnames}")
        for row in reader:
            records.append(
                RunRecord(
                    method=row["method"],
                    m=int(row["m"]),
                    n=int(row["n"]),
                    beta=int(row["beta"]) if row["beta"] else None,
                    eta=int(row["eta"]) if row["eta"] else None,
                    beta_j=int(row["beta_j"]) if row["beta_j"] else None,
                    seed=int(row["seed"]),
                    trial=int(row["trial"]),
                    iterations=int(row["iterations"]),
                    cpu_time_s=float(row["cpu_time_s"]),
                    final_res=float(row["final_res"]),
                    termination=row["termination"],
                )
            )
    return records
