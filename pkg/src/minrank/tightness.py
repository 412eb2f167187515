"""Certified tightness analysis for the convex rank relaxation.

For a PSD matrix Omega_hat of rank r with kernel isometry V, the linear
map taking a symmetric coefficient matrix X to diag(V X V^T) decides
how diagonal perturbations interact with the kernel.  When that map is
surjective onto the diagonals, every noise matrix Delta small enough in
Frobenius norm admits a zero-diagonal companion L with
Delta + L supported on the kernel and ||Delta + L|| < sigma_r(Omega_hat),
which certifies that the convex relaxation recovers Omega_hat exactly
from Sigma = Omega_hat + Delta.

The certified radius reported here is phi_lb * sigma_r with
phi_lb = 1 / sigma_max(pinv(E)) for the coordinate matrix E of the map
in an orthonormal basis of the symmetric space; coordinates then have
Euclidean norm equal to the Frobenius norm, which is exactly the chain
of inequalities the certificate needs.  The bound is sound but not
maximal: the true constant is an infimum over the nonnegative orthant
only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg

KERNEL_RTOL = 1e-8  # eigenvalues below this fraction of sigma_1 count as kernel
ORTHO_RTOL = 1e-7  # range-orthogonality residual tolerance


@dataclass(frozen=True)
class TightnessReport:
    omega_hat: np.ndarray
    r: int  # numerical rank of omega_hat
    sigma_r: float  # smallest retained eigenvalue (0 when r == 0)
    kernel_basis: np.ndarray  # n x (n - r), orthonormal columns
    extraction: np.ndarray  # n x ((n-r)(n-r+1)/2) coordinate matrix
    surjective: bool
    phi_lb: float
    certified_radius: float

    @property
    def n(self) -> int:
        return self.omega_hat.shape[0]


@dataclass(frozen=True)
class Certificate:
    lam: np.ndarray  # symmetric, exactly zero diagonal
    delta: np.ndarray  # nonnegative diagonal entries
    norm_check: float  # spectral norm of Delta + L
    range_check: float  # || Omega_hat (Delta + L) ||_F


@dataclass(frozen=True)
class Witness:
    delta: np.ndarray  # diagonal entries
    sigma: np.ndarray  # Omega_hat + diag(delta)
    v: np.ndarray  # kernel vector generating the witness
    sigma_pd: bool  # whether sigma came out positive definite


def kernel_isometry(omega_hat: np.ndarray, rtol: float = KERNEL_RTOL):
    """Orthonormal kernel basis and numerical rank of a PSD matrix.

    Returns (V, r) with V spanning the eigenvectors of the n - r
    smallest eigenvalues.
    """
    omega_hat = linalg.symmetrize(omega_hat)
    if not linalg.is_psd(omega_hat, 1e-8):
        raise ValueError("kernel analysis requires a PSD matrix")
    eig = linalg.eig_sym(omega_hat)
    top = float(eig.eigenvalues[0])
    if top <= 0.0:
        r = 0
    else:
        r = int(np.count_nonzero(eig.eigenvalues > rtol * top))
    v = eig.eigenvectors[:, r:].copy()
    return v, r


# Basis of the symmetric k x k space used for the extraction operator:
# unit diagonal elements first, then off-diagonal pairs (i < j) row-major
# with entries 1/sqrt(2), so coordinate 2-norms equal Frobenius norms.


def _sym_basis_pairs(k: int) -> list[tuple[int, int]]:
    return [(t, t) for t in range(k)] + [
        (i, j) for i in range(k) for j in range(i + 1, k)
    ]


def coords_to_sym(coords: np.ndarray, k: int) -> np.ndarray:
    if coords.shape[0] != k * (k + 1) // 2:
        raise ValueError("coordinate vector length does not match order k")
    x = np.zeros((k, k))
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for val, (i, j) in zip(coords, _sym_basis_pairs(k)):
        if i == j:
            x[i, i] = val
        else:
            x[i, j] = x[j, i] = val * inv_sqrt2
    return x


def sym_to_coords(x: np.ndarray) -> np.ndarray:
    k = x.shape[0]
    sqrt2 = np.sqrt(2.0)
    return np.array(
        [x[i, i] if i == j else sqrt2 * x[i, j] for (i, j) in _sym_basis_pairs(k)]
    )


def extraction_operator(v: np.ndarray) -> np.ndarray:
    """Coordinate matrix of X -> diag(V X V^T) on the orthonormal basis."""
    v = np.asarray(v, dtype=float)
    n, k = v.shape
    cols = []
    sqrt2 = np.sqrt(2.0)
    for (i, j) in _sym_basis_pairs(k):
        if i == j:
            cols.append(v[:, i] ** 2)
        else:
            cols.append(sqrt2 * v[:, i] * v[:, j])
    if not cols:
        return np.zeros((n, 0))
    return np.column_stack(cols)


def phi_lower_bound(extraction: np.ndarray) -> float:
    """Certified lower bound for the tightness constant; 0 if not surjective."""
    n, m = extraction.shape
    if m < n:
        return 0.0
    s = np.linalg.svd(extraction, compute_uv=False)
    if s[0] <= 0.0 or s[n - 1] <= linalg.RANK_RTOL * s[0]:
        return 0.0
    return float(s[n - 1])


def analyze(omega_hat: np.ndarray, rtol: float = KERNEL_RTOL) -> TightnessReport:
    """Full tightness report for a PSD matrix."""
    omega_hat = linalg.symmetrize(omega_hat)
    v, r = kernel_isometry(omega_hat, rtol)
    eig = linalg.eig_sym(omega_hat)
    sigma_r = float(eig.eigenvalues[r - 1]) if r >= 1 else 0.0
    e = extraction_operator(v)
    phi = phi_lower_bound(e)
    return TightnessReport(
        omega_hat=omega_hat,
        r=r,
        sigma_r=sigma_r,
        kernel_basis=v,
        extraction=e,
        surjective=phi > 0.0,
        phi_lb=phi,
        certified_radius=phi * sigma_r,
    )


def construct_lambda(report: TightnessReport, delta: np.ndarray) -> Certificate:
    """Zero-diagonal companion for a nonnegative diagonal perturbation.

    Solves E(X) = delta through the pseudoinverse and sets
    L = offdiag(V X V^T), so Delta + L lives in the kernel range by
    construction.  Requires a surjective extraction operator.
    """
    delta = np.asarray(delta, dtype=float).ravel()
    if delta.shape[0] != report.n:
        raise ValueError("delta length does not match the matrix order")
    if float(delta.min(initial=0.0)) < -1e-12 * max(1.0, float(np.abs(delta).max())):
        raise ValueError("delta must be nonnegative")
    if not report.surjective:
        raise ValueError(
            "extraction operator is not surjective; no certificate is available"
        )
    k = report.kernel_basis.shape[1]
    coords = np.linalg.pinv(report.extraction) @ delta
    x = coords_to_sym(coords, k)
    p = report.kernel_basis @ x @ report.kernel_basis.T
    lam = linalg.off_diag(linalg.symmetrize(p))
    m = np.diag(delta) + lam
    return Certificate(
        lam=lam,
        delta=delta,
        norm_check=linalg.spectral_norm(m),
        range_check=float(np.linalg.norm(report.omega_hat @ m)),
    )


def certificate_check(
    omega_hat: np.ndarray, cert: Certificate, ortho_rtol: float = ORTHO_RTOL
) -> bool:
    """True iff the certificate proves tight recovery of omega_hat.

    Checks the strict spectral bound ||Delta + L|| < sigma_r and that
    the range of Delta + L is orthogonal to the range of omega_hat
    (residual relative to sigma_1 and ||Delta + L||_F).
    """
    omega_hat = linalg.symmetrize(omega_hat)
    eig = linalg.eig_sym(omega_hat)
    top = float(eig.eigenvalues[0])
    r = int(np.count_nonzero(eig.eigenvalues > KERNEL_RTOL * top)) if top > 0 else 0
    if r == 0:
        return False
    sigma_r = float(eig.eigenvalues[r - 1])
    m = np.diag(cert.delta) + cert.lam
    spectral = linalg.spectral_norm(m)
    if spectral >= sigma_r:
        return False
    fro = float(np.linalg.norm(m))
    residual = float(np.linalg.norm(omega_hat @ m))
    return residual <= ortho_rtol * top * max(fro, 1e-300)


def membership_d_tilde(report: TightnessReport, delta: np.ndarray) -> bool:
    """True iff delta lies inside the certified Frobenius ball.

    Membership implies the relaxation is tight for
    Sigma = omega_hat + diag(delta) whenever Sigma is positive definite.
    """
    delta = np.asarray(delta, dtype=float).ravel()
    if float(delta.min(initial=0.0)) < -1e-12 * max(1.0, float(np.abs(delta).max())):
        raise ValueError("delta must be nonnegative")
    return float(np.linalg.norm(delta)) < report.certified_radius


def nonempty_witness(
    omega_hat: np.ndarray,
    seed: int = 0,
    scale: float = 0.5,
    attempts: int = 200,
) -> Witness:
    """Construct Sigma = omega_hat + diag(v v^T) from a kernel vector.

    The kernel vector is scaled to norm scale * sqrt(sigma_r), which
    keeps ||v v^T|| strictly inside the spectral bound, and is chosen
    (deterministically, via seeded draws) so that Sigma is positive
    definite whenever such a choice exists among the candidates.
    """
    if not (0.0 < scale < 1.0):
        raise ValueError("scale must lie in (0, 1)")
    omega_hat = linalg.symmetrize(omega_hat)
    v_basis, r = kernel_isometry(omega_hat)
    n = omega_hat.shape[0]
    if r >= n:
        raise ValueError("matrix has no kernel; a full-rank input admits no witness")
    if r == 0:
        raise ValueError("zero matrix has sigma_r = 0; no witness exists")
    sigma_r = float(linalg.eig_sym(omega_hat).eigenvalues[r - 1])
    target = scale * np.sqrt(sigma_r)
    k = v_basis.shape[1]

    rng = np.random.default_rng(seed)
    best = None
    best_eig = -np.inf
    for t in range(attempts):
        w = np.ones(k) if t == 0 else rng.standard_normal(k)
        nv = float(np.linalg.norm(w))
        if nv == 0.0:
            continue
        vec = v_basis @ (w / nv) * target
        sigma = omega_hat + np.diag(vec**2)
        w_min = float(linalg.eig_sym(sigma).eigenvalues[-1])
        if w_min > best_eig:
            best_eig = w_min
            best = vec
        if linalg.is_pd(sigma):
            best = vec
            break
    vec = best
    sigma = linalg.symmetrize(omega_hat + np.diag(vec**2))
    delta = vec**2
    cert = Certificate(
        lam=linalg.off_diag(np.outer(vec, vec)),
        delta=delta,
        norm_check=float(vec @ vec),
        range_check=float(np.linalg.norm(omega_hat @ np.outer(vec, vec))),
    )
    if not certificate_check(omega_hat, cert):
        raise RuntimeError(
            "witness certificate unexpectedly failed; kernel tolerance too loose"
        )
    return Witness(
        delta=delta,
        sigma=sigma,
        v=vec,
        sigma_pd=linalg.is_pd(sigma),
    )


def report_to_keyvalues(report: TightnessReport) -> str:
    """Machine-readable key=value rendering of a tightness report."""
    lines = [
        f"n={report.n}",
        f"rank={report.r}",
        f"sigma_r={report.sigma_r:.9g}",
        f"kernel_dim={report.n - report.r}",
        f"surjective={'true' if report.surjective else 'false'}",
        f"phi_lower_bound={report.phi_lb:.9g}",
    ]
    if report.r == report.n:
        lines.append("certified_radius=n/a")
    else:
        lines.append(f"certified_radius={report.certified_radius:.9g}")
    return "\n".join(lines) + "\n"
