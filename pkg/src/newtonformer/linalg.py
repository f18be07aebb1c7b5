"""Dense matrix utilities used everywhere else in the package.

Matrices are plain 2-D float64 numpy arrays in row-major (C) order,
validated at the public entry points.  numpy/scipy supply the raw
arithmetic; the estimators and the CSV wire format are defined here.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DefinitenessError, ShapeMismatchError, SymmetryError

__all__ = [
    "as_matrix",
    "matmul",
    "frobenius_norm",
    "spectral_norm_est",
    "solve_spd",
    "save_matrix_csv",
    "load_matrix_csv",
]

_MASK64 = (1 << 64) - 1


def as_matrix(obj, name="matrix"):
    """Validate *obj* as a finite 2-D float64 matrix and return it.

    Accepts anything ``np.asarray`` does.  Raises ``ShapeMismatchError``
    for non-2-D input and ``ValueError`` for NaN/Inf entries.
    """
    a = np.ascontiguousarray(obj, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _check_result_finite(a, op):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{op} produced non-finite entries")
    return a


def matmul(a, b):
    """Matrix product a @ b with shape and finiteness checks."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"inner dimensions differ: {a.shape} vs {b.shape}"
        )
    return _check_result_finite(a @ b, "matmul")


def frobenius_norm(a):
    """Frobenius norm of a matrix."""
    return float(np.linalg.norm(as_matrix(a)))


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _start_vector(n, seed):
    """Deterministic non-degenerate start vector from a splitmix64 stream."""
    state = seed & _MASK64
    v = np.empty(n)
    for i in range(n):
        state, z = _splitmix64(state)
        v[i] = (z >> 11) * 2.0**-53 - 0.5
    return v


def spectral_norm_est(a, iters=200, seed=0):
    """Estimate the largest singular value of *a* by power iteration.

    Runs *iters* applications of ``a.T @ a`` to a start vector derived
    deterministically from *seed* and returns the Rayleigh-quotient
    estimate ``||a v||`` for the final unit vector ``v``.  The estimate
    never exceeds the true spectral norm and is nondecreasing in
    *iters*.  A zero matrix returns 0.0.
    """
    a = as_matrix(a)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if not np.any(a):
        return 0.0
    v = _start_vector(a.shape[1], seed)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = a.T @ (a @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector fell in the null space; nudge deterministically
            v = _start_vector(a.shape[1], seed + 1)
            v /= np.linalg.norm(v)
            continue
        v = w / nw
    return float(np.linalg.norm(a @ v))


def solve_spd(a, b, sym_tol=1e-12):
    """Solve ``a x = b`` for symmetric positive definite *a*.

    Uses a Cholesky factorization.  Raises ``SymmetryError`` when *a*
    deviates from symmetry by more than *sym_tol* relative to its
    largest entry, and ``DefinitenessError`` when the factorization
    fails.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"a must be square, got {a.shape}")
    if a.shape[0] != b.shape[0]:
        raise ShapeMismatchError(
            f"a is {a.shape} but b has {b.shape[0]} rows"
        )
    scale = np.max(np.abs(a))
    if scale > 0 and np.max(np.abs(a - a.T)) > sym_tol * scale:
        raise SymmetryError("matrix is not symmetric")
    try:
        factor = cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError(f"matrix is not positive definite: {exc}") from exc
    return _check_result_finite(cho_solve(factor, b, check_finite=False), "solve_spd")


def save_matrix_csv(a, path):
    """Write a matrix as CSV, one row per line, 17 significant digits.

    17 significant decimal digits round-trip every IEEE double exactly,
    and the format is locale-independent.
    """
    a = as_matrix(a)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in a:
            fh.write(",".join(f"{x:.17g}" for x in row))
            fh.write("\n")


def load_matrix_csv(path):
    """Read a matrix written by ``save_matrix_csv``."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        raise ValueError(f"{path} contains no rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ShapeMismatchError(f"{path} has ragged rows")
    return as_matrix(rows, str(path))
