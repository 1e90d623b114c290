"""Dense linear-algebra kernels shared by the whole package.

Matrices are plain float64 ndarrays. All functions are pure; nothing here
mutates its inputs.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

SYMMETRY_RTOL = 1e-10


class NotPositiveDefiniteError(ValueError):
    """Cholesky factorization failed; ``pivot`` is the 1-based failing pivot."""

    def __init__(self, pivot):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (pivot {pivot})")


@dataclass(frozen=True)
class SpdSolveResult:
    solution: np.ndarray
    residual_norm: float


def solve_spd(A, B):
    """Solve A @ X = B for symmetric positive-definite A via Cholesky.

    A must be symmetric to relative tolerance 1e-10. No damping is added
    here; callers that need regularization add it explicitly.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"incompatible shapes {A.shape} and {B.shape}")
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(B)):
        raise ValueError("non-finite entries in solve_spd input")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.T).max() > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    try:
        c, low = sla.cho_factor(A, check_finite=False)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError(_failing_pivot(err)) from err
    return sla.cho_solve((c, low), B, check_finite=False)


def solve_spd_checked(A, b):
    """solve_spd plus a post-hoc residual norm ||A x - b||."""
    x = solve_spd(A, b)
    residual = float(np.linalg.norm(np.asarray(A) @ x - np.asarray(b)))
    return SpdSolveResult(solution=x, residual_norm=residual)


def _failing_pivot(err):
    # scipy reports "k-th leading minor ... is not positive definite"
    msg = str(err)
    head = msg.split("-th", 1)[0]
    try:
        return int(head)
    except ValueError:
        return -1


def singular_extremes(A):
    """(sigma_max, sigma_min) of a nonempty matrix.

    The orientation is canonicalized before the factorization so A and A^T
    produce bit-identical results, as the transpose invariance demands.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.size == 0:
        raise ValueError("empty matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("non-finite entries")
    r, c = A.shape
    if r > c:
        A = A.T
    elif r == c:
        a, b = A.ravel(), A.T.ravel()
        diff = np.flatnonzero(a != b)
        if diff.size and a[diff[0]] > b[diff[0]]:
            A = A.T
    s = np.linalg.svd(np.ascontiguousarray(A), compute_uv=False)
    return float(s[0]), float(s[-1])


def frobenius_norm(A):
    A = np.asarray(A, dtype=np.float64)
    if A.size == 0:
        raise ValueError("empty matrix")
    return float(np.sqrt(np.sum(A * A)))


def max_eigenvalue_sym(A):
    """Largest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(np.asarray(A, dtype=np.float64))[-1])
