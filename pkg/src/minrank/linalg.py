"""Dense symmetric linear algebra: eigendecompositions, truncated spectral
approximation, the spectral/Ky Fan/r-norm family, and PSD tests.

All matrices handled here are real symmetric and stored as full dense
``numpy`` arrays.  Singular values of a symmetric matrix are the absolute
eigenvalues, so everything is built on one symmetric eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Numerical rank counts singular values above RANK_RTOL * sigma_1.
RANK_RTOL = 1e-7


class EigenConvergenceError(RuntimeError):
    """Eigendecomposition failed to converge.

    Carries the off-diagonal residual of the input so callers can judge
    how far the iteration got before giving up.
    """

    def __init__(self, message: str, offdiag_residual: float):
        super().__init__(f"{message} (off-diagonal residual {offdiag_residual:.3e})")
        self.offdiag_residual = offdiag_residual


@dataclass(frozen=True)
class SymEig:
    """Eigendecomposition A = U diag(w) U^T with w sorted nonincreasing."""

    eigenvalues: np.ndarray  # shape (n,), nonincreasing
    eigenvectors: np.ndarray  # shape (n, n), orthonormal columns

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return symmetrize(u @ np.diag(self.eigenvalues) @ u.T)


def check_square(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 1:
        raise ValueError("matrix dimension must be >= 1")
    return a


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return (A + A^T) / 2 as a new array."""
    a = check_square(a)
    return 0.5 * (a + a.T)


def asymmetry(a: np.ndarray) -> float:
    """Frobenius norm of the skew part A - A^T."""
    a = check_square(a)
    return float(np.linalg.norm(a - a.T))


def _fix_sign(u: np.ndarray) -> np.ndarray:
    # Deterministic sign convention: first nonzero component of each
    # eigenvector is positive.  Makes ties reproducible across runs.
    u = u.copy()
    n = u.shape[0]
    for k in range(u.shape[1]):
        col = u[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(1.0, float(np.abs(col).max())))
        j = nz[0] if nz.size else 0
        if col[j] < 0:
            u[:, k] = -col
    return u


def eig_sym(a: np.ndarray) -> SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues nonincreasing.

    Raises EigenConvergenceError if the underlying LAPACK iteration fails.
    """
    a = symmetrize(a)
    try:
        w, u = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        raise EigenConvergenceError(str(exc), off) from exc
    # eigh returns ascending order
    w = w[::-1].copy()
    u = u[:, ::-1].copy()
    return SymEig(eigenvalues=w, eigenvectors=_fix_sign(u))


def singular_values(a: np.ndarray) -> np.ndarray:
    """Singular values of a symmetric matrix: |eigenvalues|, nonincreasing."""
    w = eig_sym(a).eigenvalues
    return np.sort(np.abs(w))[::-1]


def spectral_norm(a: np.ndarray) -> float:
    return float(singular_values(a)[0])


def _check_r(r: int, n: int) -> None:
    if not (1 <= r <= n):
        raise ValueError(f"order r={r} out of range [1, {n}]")


def _abs_order(w: np.ndarray) -> np.ndarray:
    # Stable nonincreasing order of |w|.  Input w is already sorted
    # nonincreasing, so +/-lambda ties resolve to the positive one first.
    return np.argsort(-np.abs(w), kind="stable")


def svd_truncate(a: np.ndarray, r: int) -> np.ndarray:
    """Best Frobenius rank-r approximation of a symmetric matrix.

    Keeps the r largest-|eigenvalue| terms of the eigendecomposition
    (Eckart-Young / Schmidt-Mirsky).  With a tie sigma_r = sigma_{r+1}
    the minimizer is not unique; the stable-order convention picks one
    deterministically.
    """
    eig = eig_sym(a)
    _check_r(r, eig.n)
    order = _abs_order(eig.eigenvalues)[:r]
    w = eig.eigenvalues[order]
    u = eig.eigenvectors[:, order]
    return symmetrize((u * w) @ u.T)


def r_norm(a: np.ndarray, r: int) -> float:
    """sqrt of the sum of the r largest squared singular values.

    Equals the Frobenius norm at r = n and the spectral norm at r = 1.
    """
    s = singular_values(a)
    _check_r(r, s.shape[0])
    return float(np.sqrt(np.sum(s[:r] ** 2)))


def ky_fan_norm(a: np.ndarray, r: int) -> float:
    """Sum of the r largest singular values."""
    s = singular_values(a)
    _check_r(r, s.shape[0])
    return float(np.sum(s[:r]))


def numerical_rank(a: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Number of singular values above rtol * sigma_1."""
    s = singular_values(a)
    if s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def is_psd(a: np.ndarray, tol: float = 1e-9) -> bool:
    """True iff lambda_min(A) >= -tol * max(1, ||A||_F)."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    a = symmetrize(a)
    w_min = float(eig_sym(a).eigenvalues[-1])
    return w_min >= -tol * max(1.0, float(np.linalg.norm(a)))


def is_pd(a: np.ndarray, tol: float = 1e-10) -> bool:
    """True iff lambda_min(A) > tol * max(1, ||A||_F), i.e. safely positive."""
    a = symmetrize(a)
    w_min = float(eig_sym(a).eigenvalues[-1])
    return w_min > tol * max(1.0, float(np.linalg.norm(a)))


def off_diag(x: np.ndarray) -> np.ndarray:
    """Project onto the off-diagonal part: X - diag(X)."""
    x = check_square(x)
    out = x.copy()
    np.fill_diagonal(out, 0.0)
    return out


def max_offdiag(x: np.ndarray) -> float:
    """Largest |entry| outside the diagonal."""
    return float(np.abs(off_diag(x)).max())
