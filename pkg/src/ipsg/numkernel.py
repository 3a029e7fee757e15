"""Dense real linear algebra helpers.

Matrices and vectors are plain float64 numpy arrays. The functions here add
the dimension/finiteness checks and error types the rest of the package relies
on; the heavy lifting is LAPACK via numpy/scipy.
"""

import numpy as np
import scipy.linalg

from .errors import InputError, NumericalError


def as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} has non-finite entries")
    return M


def as_vector(v, name="vector"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise InputError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InputError(f"{name} has non-finite entries")
    return v


def matvec(M, v):
    M = as_matrix(M)
    v = as_vector(v)
    if M.shape[1] != v.shape[0]:
        raise InputError(f"dimension mismatch: {M.shape} @ ({v.shape[0]},)")
    return M @ v


def gram(A):
    """Return A^T A, symmetrized so roundoff never breaks exact symmetry."""
    A = as_matrix(A)
    S = A.T @ A
    return 0.5 * (S + S.T)


def _check_symmetric(S, tol):
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    asym = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if asym > tol * scale:
        raise InputError(f"matrix is not symmetric (max asymmetry {asym:.3e})")


def sym_extreme_eigs(S, tol=1e-10):
    """Largest and smallest eigenvalue of a symmetric PSD matrix.

    Uses the full LAPACK symmetric eigensolver; the matrices here are at most a
    few hundred wide so robustness wins over iterative methods.
    """
    S = as_matrix(S)
    if S.shape[0] != S.shape[1]:
        raise InputError(f"matrix must be square, got {S.shape}")
    _check_symmetric(S, tol)
    try:
        w = np.linalg.eigvalsh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    s1, sd = float(w[-1]), float(w[0])
    if sd < -tol * max(1.0, abs(s1)):
        raise InputError(f"matrix is not positive semi-definite (smallest eigenvalue {sd:.3e})")
    return s1, sd


def solve_spd(S, RHS):
    """Solve S X = RHS for symmetric positive definite S via Cholesky."""
    S = as_matrix(S)
    RHS = np.asarray(RHS, dtype=np.float64)
    if S.shape[0] != S.shape[1] or RHS.shape[0] != S.shape[0]:
        raise InputError(f"dimension mismatch: {S.shape} vs RHS {RHS.shape}")
    try:
        factor = scipy.linalg.cho_factor(S, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"non-positive pivot, matrix is not positive definite: {exc}") from exc
    X = scipy.linalg.cho_solve(factor, RHS)
    # One step of iterative refinement recovers most of the digits lost to roundoff.
    return X + scipy.linalg.cho_solve(factor, RHS - S @ X)


def spectral_norm(M, tol=1e-12):
    """Induced 2-norm: square root of the largest eigenvalue of M^T M."""
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    # Work with the smaller gram to keep cost at min(rows, cols)^3.
    G = gram(M) if M.shape[1] <= M.shape[0] else gram(M.T)
    s1, _ = sym_extreme_eigs(G, tol=max(tol, 1e-10))
    return float(np.sqrt(max(s1, 0.0)))


def frob_norm(M):
    return float(np.sqrt(np.sum(np.square(as_matrix(M)))))


def vec_norm(v):
    return float(np.sqrt(np.sum(np.square(as_vector(v)))))


def condition_number(A):
    """kappa(A^T A) = s1 / sd."""
    s1, sd = sym_extreme_eigs(gram(A))
    if sd <= 0:
        return float("inf")
    return s1 / sd
