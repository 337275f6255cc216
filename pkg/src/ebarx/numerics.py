"""Small dense symmetric positive-definite kernels.

Every matrix in this package is at most (n+m) x (n+m), so everything here is
plain dense linear algebra. Positive-definiteness is decided by Cholesky
success with a fixed pivot threshold, never by an eigen-decomposition.
"""

import numpy as np
from scipy.linalg import cho_solve

from .errors import NotPositiveDefinite

PIVOT_TOL = 1e-12
MAX_DIM = 64


def symmetrize(m):
    """Return ``(m + m.T) / 2`` as a float array."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] > MAX_DIM:
        raise ValueError(f"matrix dimension {m.shape[0]} exceeds {MAX_DIM}")
    return 0.5 * (m + m.T)


def cholesky(m, tol=PIVOT_TOL):
    """Lower Cholesky factor of a symmetric matrix.

    The pivot test is relative to the largest diagonal entry so that the
    threshold does not depend on the overall scale of ``m``.

    Raises
    ------
    NotPositiveDefinite
        With the index of the first leading minor whose pivot is <= tol.
    """
    a = symmetrize(m)
    d = a.shape[0]
    scale = np.max(np.abs(np.diag(a))) if d else 1.0
    L = np.zeros_like(a)
    for j in range(d):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if not (pivot > tol * scale and pivot > 0):
            raise NotPositiveDefinite(j, pivot)
        L[j, j] = np.sqrt(pivot)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def is_positive_definite(m, tol=PIVOT_TOL):
    try:
        cholesky(m, tol)
    except NotPositiveDefinite:
        return False
    return True


def spd_inverse(m):
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    L = cholesky(m)
    inv = cho_solve((L, True), np.eye(L.shape[0]))
    return symmetrize(inv)


def spd_solve(m, b):
    """Solve ``m x = b`` for SPD ``m``."""
    L = cholesky(m)
    return cho_solve((L, True), np.asarray(b, dtype=float))


def inversion_lemma_lhs(a_inv, b, c_inv):
    """Return ``(A + B C B^T)^{-1}`` given ``A^{-1}``, ``B`` and ``C^{-1}``.

    Uses ``A^{-1} - A^{-1} B (C^{-1} + B^T A^{-1} B)^{-1} B^T A^{-1}``, so the
    only factorization is of the inner k x k matrix.
    """
    a_inv = symmetrize(a_inv)
    c_inv = symmetrize(c_inv)
    cholesky(a_inv)
    b = np.asarray(b, dtype=float).reshape(a_inv.shape[0], c_inv.shape[0])
    ab = a_inv @ b
    inner = c_inv + b.T @ ab
    return symmetrize(a_inv - ab @ spd_solve(inner, ab.T))
