"""Convex rank search for the Frisch-Kalman problem.

Given an observed covariance Sigma, the Frisch-Kalman problem asks for
the smallest rank of Omega in a factor-analytic split
Sigma = Omega + Delta with Omega PSD and Delta nonnegative diagonal.
The Shapiro variant drops the nonnegativity of Delta.

For a candidate rank r the search solves a concave dual over symmetric
matrices with zero diagonal::

    maximize  -||Sigma + L||_r^2 + 2 <L, Sigma> + ||Sigma||_F^2

cast as an SDP, recovers a primal candidate Omega as the best rank-r
approximation of Sigma + L, and accepts r when the candidate satisfies
the original constraints.  Zero duality gap certifies that the accepted
candidate is optimal at that rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from . import conic, linalg
from .conic import Cone, PreparedProblem, SdpProblem, SdpSolution, SolverConfig

VARIANT_FK = "frisch-kalman"
VARIANT_SHAPIRO = "shapiro"

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class FkConfig:
    sdp: SolverConfig = field(default_factory=SolverConfig)
    psd_tol: float = 1e-6  # relative PSD feasibility tolerance
    offdiag_rtol: float = 1e-5  # off-diagonal tolerance, relative to ||Sigma||_F
    warm_start: bool = True
    polish_steps: int = 400  # dual quasi-Newton refinement; 0 disables
    # a rank counts as solved when the splitting converged or the polished
    # dual gradient is this small relative to ||Sigma||_F
    grad_rtol: float = 1e-6

    def offdiag_tol(self, sigma: np.ndarray) -> float:
        return self.offdiag_rtol * max(1e-300, float(np.linalg.norm(sigma)))


@dataclass(frozen=True)
class FkInstance:
    """Problem input: symmetric covariance plus the constraint variant."""

    sigma: np.ndarray
    variant: str = VARIANT_FK

    def __post_init__(self):
        sigma = linalg.symmetrize(self.sigma)
        object.__setattr__(self, "sigma", sigma)
        if self.variant not in (VARIANT_FK, VARIANT_SHAPIRO):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == VARIANT_FK and not linalg.is_pd(sigma):
            raise ValueError("Frisch-Kalman instances require a positive definite matrix")

    @property
    def n(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True)
class FeasibilityVerdict:
    """Constraint diagnostics for a candidate Omega (never raises)."""

    omega_psd: bool
    diff_psd: bool | None  # Sigma - Omega PSD; None for the Shapiro variant
    offdiag_ok: bool
    min_eig_omega: float
    min_eig_diff: float
    max_offdiag: float

    @property
    def feasible(self) -> bool:
        ok = self.omega_psd and self.offdiag_ok
        if self.diff_psd is not None:
            ok = ok and self.diff_psd
        return ok


@dataclass(frozen=True)
class RankAttempt:
    r: int
    lambda_star: np.ndarray
    solver_status: str
    verdict: FeasibilityVerdict | None  # None when the SDP did not converge
    dual_value: float
    omega: np.ndarray | None = None  # recovered candidate (converged solves only)

    @property
    def accepted(self) -> bool:
        return self.verdict is not None and self.verdict.feasible


@dataclass(frozen=True)
class FkResult:
    r_star: int
    omega_star: np.ndarray
    delta_star: np.ndarray  # diagonal entries of Sigma - Omega*
    dual_value: float
    primal_value: float
    per_rank: tuple[RankAttempt, ...]
    fallback_used: bool
    variant: str

    @property
    def gap(self) -> float:
        return self.primal_value - self.dual_value


# ---------------------------------------------------------------------------
# SDP construction

# Variable layout for the rank-r dual SDP over (T, L, gamma):
#   T      symmetric n x n, scalarized            -> pn = n(n+1)/2 coords
#   L      zero-diagonal symmetric, off-diag only -> qn = n(n-1)/2 coords
#   gamma  scalar
# Constraints:  T - gamma I PSD,  [[T, Sigma+L], [Sigma+L, I]] PSD.
# Objective (min form):  tr(T) - gamma (n - r) - 2 <L, Sigma>.
# The SDP optimum then satisfies
#   ||Sigma||_F^2 - min = max_L -||Sigma+L||_r^2 + 2<L,Sigma> + ||Sigma||_F^2.


def _offdiag_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for j in range(n) for i in range(j + 1, n)]


def _layout(n: int):
    pn = conic.svec_dim(n)
    pairs = _offdiag_pairs(n)
    return pn, pairs, pn + len(pairs)


def _dual_sdp_parts(sigma: np.ndarray):
    """Constraint matrix, rhs and cones of the dual SDP (rank-independent)."""
    n = sigma.shape[0]
    pn, pairs, gamma = _layout(n)
    qn = len(pairs)
    nvar = gamma + 1
    two_n = 2 * n
    p2 = conic.svec_dim(two_n)

    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    # block 1 (rows 0 .. pn-1):  s = svec(T - gamma I)
    for j in range(n):
        for i in range(j, n):
            k = conic.svec_entry_index(n, i, j)
            add(k, k, -1.0)
            if i == j:
                add(k, gamma, 1.0)
    b1 = np.zeros(pn)

    # block 2 (rows pn .. pn+p2-1):  s = svec([[T, Sigma+L], [Sigma+L, I]])
    base = pn
    b2 = np.zeros(p2)
    for j in range(n):
        for i in range(j, n):
            add(base + conic.svec_entry_index(two_n, i, j),
                conic.svec_entry_index(n, i, j), -1.0)
    for p, (i, j) in enumerate(pairs):
        add(base + conic.svec_entry_index(two_n, n + i, j), pn + p, -1.0)
        add(base + conic.svec_entry_index(two_n, n + j, i), pn + p, -1.0)
    for i in range(n):
        for j in range(n):
            b2[conic.svec_entry_index(two_n, n + i, j)] = _SQRT2 * sigma[i, j]
        b2[conic.svec_entry_index(two_n, n + i, n + i)] = 1.0

    a = sp.csr_matrix(
        (vals, (rows, cols)), shape=(pn + p2, nvar)
    )
    b = np.concatenate([b1, b2])
    cones = (Cone(conic.PSD, n), Cone(conic.PSD, two_n))
    return a, b, cones, (pn, pairs, gamma)


def _dual_objective(sigma: np.ndarray, layout, r: int) -> np.ndarray:
    n = sigma.shape[0]
    pn, pairs, gamma = layout
    c = np.zeros(gamma + 1)
    for i in range(n):
        c[conic.svec_entry_index(n, i, i)] = 1.0
    for p, (i, j) in enumerate(pairs):
        c[pn + p] = -2.0 * _SQRT2 * sigma[i, j]
    c[gamma] = -(n - r)
    return c


def build_dual_sdp(sigma: np.ndarray, r: int) -> SdpProblem:
    """Rank-r dual SDP as a standard-form conic program."""
    sigma = linalg.symmetrize(sigma)
    n = sigma.shape[0]
    if not (1 <= r <= n):
        raise ValueError(f"rank r={r} out of range [1, {n}]")
    a, b, cones, layout = _dual_sdp_parts(sigma)
    c = _dual_objective(sigma, layout, r)
    return SdpProblem.create(c, a, b, cones)


def extract_lambda(solution_primal: np.ndarray, n: int) -> np.ndarray:
    """Reassemble the zero-diagonal dual matrix from the SDP variable vector."""
    pn = conic.svec_dim(n)
    lam = np.zeros((n, n))
    for p, (i, j) in enumerate(_offdiag_pairs(n)):
        v = solution_primal[pn + p] / _SQRT2
        lam[i, j] = v
        lam[j, i] = v
    return lam


def dual_value(sigma: np.ndarray, lam: np.ndarray, r: int) -> float:
    """Dual objective -||Sigma+L||_r^2 + 2<L,Sigma> + ||Sigma||_F^2."""
    return float(
        -linalg.r_norm(sigma + lam, r) ** 2
        + 2.0 * np.sum(lam * sigma)
        + np.linalg.norm(sigma) ** 2
    )


def _dual_f_grad(sigma: np.ndarray, lam: np.ndarray, r: int):
    """Dual objective and its gradient on the zero-diagonal subspace.

    The gradient is 2 offdiag(Sigma - [Sigma + L]_r), so a vanishing
    gradient is exactly the diagonality condition on Sigma - Omega.
    """
    eig = linalg.eig_sym(sigma + lam)
    order = np.argsort(-np.abs(eig.eigenvalues), kind="stable")[:r]
    w = eig.eigenvalues[order]
    u = eig.eigenvectors[:, order]
    omega = (u * w) @ u.T
    f = float(
        -np.sum(w**2) + 2.0 * np.sum(lam * sigma) + np.linalg.norm(sigma) ** 2
    )
    grad = 2.0 * linalg.off_diag(sigma - omega)
    return f, grad


def _lam_pack(lam: np.ndarray, pairs) -> np.ndarray:
    return np.array([lam[i, j] for (i, j) in pairs])


def _lam_unpack(vec: np.ndarray, n: int, pairs) -> np.ndarray:
    lam = np.zeros((n, n))
    for v, (i, j) in zip(vec, pairs):
        lam[i, j] = lam[j, i] = v
    return lam


def _ascend(sigma: np.ndarray, lam: np.ndarray, r: int, max_evals: int):
    """Quasi-Newton ascent on the concave dual; returns (lam, value)."""
    n = sigma.shape[0]
    pairs = _offdiag_pairs(n)
    if not pairs:
        return lam, _dual_f_grad(sigma, lam, r)[0]

    def neg(vec):
        f, g = _dual_f_grad(sigma, _lam_unpack(vec, n, pairs), r)
        # every off-diagonal coordinate appears twice in the matrix
        return -f, -2.0 * _lam_pack(g, pairs)

    x0 = _lam_pack(lam, pairs)
    res = scipy.optimize.minimize(
        neg,
        x0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_evals, "ftol": 1e-18, "gtol": 1e-14},
    )
    f0, _ = neg(x0)
    if res.fun <= f0:
        return _lam_unpack(res.x, n, pairs), -float(res.fun)
    return lam, -float(f0)


def polish_lambda(
    sigma: np.ndarray, lam: np.ndarray, r: int, max_steps: int = 400
) -> np.ndarray:
    """Refine a dual iterate: ascend to the optimal value, then select a
    small-norm point on the (possibly flat) optimal face.

    First-order conic solves localize the dual value well but can leave
    the argument far from a canonical maximizer: whenever the kernel of
    the recovered matrix is wide enough, the maximizer set is a whole
    face and every point on it is equally optimal.  Monotone
    quasi-Newton ascent sharpens the value (and with it the diagonality
    of the recovered residual, which is exactly the dual gradient); the
    shrink-and-reascend rounds then walk along the face toward its
    minimum-norm point (the zero matrix, for an input that is exactly
    low rank) without giving up optimality beyond a machine-noise
    slack.  The result never has a meaningfully worse dual value than
    the input.
    """
    sigma = linalg.symmetrize(sigma)
    lam = linalg.off_diag(np.asarray(lam, dtype=float))
    lam, f_best = _ascend(sigma, lam, r, max_steps)
    slack = 1e-12 * max(1.0, float(np.linalg.norm(sigma)) ** 2)
    for _ in range(200):
        norm = float(np.linalg.norm(lam))
        if norm <= 1e-12:
            break
        cand, f_cand = _ascend(sigma, 0.8 * lam, r, 60)
        if f_cand < f_best - slack:
            break
        f_best = max(f_best, f_cand)
        if float(np.linalg.norm(cand)) >= 0.95 * norm:
            lam = cand
            break
        lam = cand
    return lam


def recover_primal(sigma: np.ndarray, lambda_star: np.ndarray, r: int) -> np.ndarray:
    """Best rank-r approximation of Sigma + Lambda*.

    lambda_star must have (numerically) zero diagonal; it is snapped to
    exact zero before the truncation.
    """
    lambda_star = np.asarray(lambda_star, dtype=float)
    diag_err = float(np.abs(np.diag(lambda_star)).max()) if lambda_star.size else 0.0
    if diag_err > 1e-8:
        raise ValueError(
            f"lambda_star diagonal must vanish; largest entry {diag_err:.3e}"
        )
    lam = linalg.off_diag(lambda_star)
    return linalg.svd_truncate(linalg.symmetrize(sigma) + lam, r)


def check_feasibility(
    sigma: np.ndarray,
    omega: np.ndarray,
    variant: str = VARIANT_FK,
    psd_tol: float = 1e-6,
    offdiag_tol: float | None = None,
) -> FeasibilityVerdict:
    """Verdict on Omega against the constraints of the chosen variant."""
    sigma = linalg.symmetrize(sigma)
    omega = linalg.symmetrize(omega)
    if offdiag_tol is None:
        offdiag_tol = FkConfig().offdiag_tol(sigma)
    diff = sigma - omega

    def _min_eig(m: np.ndarray) -> float:
        return float(linalg.eig_sym(m).eigenvalues[-1])

    def _psd_ok(m: np.ndarray, w_min: float) -> bool:
        return w_min >= -psd_tol * max(1.0, float(np.linalg.norm(m)))

    w_omega = _min_eig(omega)
    worst_off = linalg.max_offdiag(diff)
    if variant == VARIANT_FK:
        w_diff = _min_eig(diff)
        diff_psd = _psd_ok(diff, w_diff)
    elif variant == VARIANT_SHAPIRO:
        w_diff = float("nan")
        diff_psd = None
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return FeasibilityVerdict(
        omega_psd=_psd_ok(omega, w_omega),
        diff_psd=diff_psd,
        offdiag_ok=worst_off <= offdiag_tol,
        min_eig_omega=w_omega,
        min_eig_diff=w_diff,
        max_offdiag=worst_off,
    )


def duality_gap(
    instance: FkInstance,
    r: int,
    lambda_star: np.ndarray,
    omega_star: np.ndarray,
    config: FkConfig | None = None,
) -> float:
    """Primal objective minus dual objective at rank r.

    Requires omega_star feasible for the variant; nonnegative up to
    solver tolerance by weak duality.
    """
    cfg = config or FkConfig()
    verdict = check_feasibility(
        instance.sigma, omega_star, instance.variant,
        cfg.psd_tol, cfg.offdiag_tol(instance.sigma),
    )
    if not verdict.feasible:
        raise ValueError(
            "omega_star is not feasible at this rank: "
            f"min_eig_omega={verdict.min_eig_omega:.3e}, "
            f"min_eig_diff={verdict.min_eig_diff:.3e}, "
            f"max_offdiag={verdict.max_offdiag:.3e}"
        )
    primal = float(np.linalg.norm(instance.sigma - omega_star) ** 2)
    return primal - dual_value(instance.sigma, lambda_star, r)


# ---------------------------------------------------------------------------
# rank search


def _result_from_omega(
    instance: FkInstance,
    omega: np.ndarray,
    dual: float,
    per_rank: list[RankAttempt],
    fallback: bool,
) -> FkResult:
    sigma = instance.sigma
    delta = np.diag(sigma - omega).copy()
    primal = float(np.linalg.norm(sigma - omega) ** 2)
    return FkResult(
        r_star=linalg.numerical_rank(omega),
        omega_star=omega,
        delta_star=delta,
        dual_value=dual,
        primal_value=primal,
        per_rank=tuple(per_rank),
        fallback_used=fallback,
        variant=instance.variant,
    )


def solve_at_rank(
    sigma: np.ndarray,
    r: int,
    variant: str = VARIANT_FK,
    config: FkConfig | None = None,
    prepared: PreparedProblem | None = None,
    warm: SdpSolution | None = None,
) -> tuple[RankAttempt, SdpSolution]:
    """One step of the rank search: dual SDP, polish, recovery, verdict.

    An unconverged SDP yields a verdict of None (treated as infeasible
    by the search).  Returns the attempt and the raw conic solution so
    callers can warm-start the next rank.
    """
    cfg = config or FkConfig()
    sigma = linalg.symmetrize(sigma)
    n = sigma.shape[0]
    if prepared is None:
        a, b, cones, _ = _dual_sdp_parts(sigma)
        prepared = PreparedProblem(a, b, cones, cfg.sdp)
    c = _dual_objective(sigma, _layout(n), r)
    sol = prepared.solve(c, cfg.sdp, warm=warm)
    lam = extract_lambda(sol.primal, n)
    if cfg.polish_steps > 0:
        lam = polish_lambda(sigma, lam, r, cfg.polish_steps)
    d_val = dual_value(sigma, lam, r)
    if sol.status != conic.STATUS_OPTIMAL:
        # the splitting gave up; accept the rank only if the polished dual
        # point is verifiably stationary, otherwise report it unsolved
        _, grad = _dual_f_grad(sigma, lam, r)
        gnorm = float(np.linalg.norm(grad))
        if gnorm > cfg.grad_rtol * max(1.0, float(np.linalg.norm(sigma))):
            return RankAttempt(r, lam, sol.status, None, d_val), sol
    omega = recover_primal(sigma, lam, r)
    verdict = check_feasibility(sigma, omega, variant, cfg.psd_tol, cfg.offdiag_tol(sigma))
    return RankAttempt(r, lam, sol.status, verdict, d_val, omega), sol


def solve(
    instance: FkInstance,
    r_init: int = 1,
    config: FkConfig | None = None,
) -> FkResult:
    """Rank search: increase r until the recovered candidate is feasible.

    Returns the first accepted candidate (an upper bound on the minimum
    rank).  A diagonal input short-circuits to rank 0.  If no rank up to
    n-1 is accepted, falls back to Delta = lambda_min(Sigma) I, which is
    always feasible with rank(Sigma - Delta) <= n-1, and flags it.
    """
    cfg = config or FkConfig()
    sigma = instance.sigma
    n = instance.n
    if r_init < 1 or (n > 1 and r_init > n - 1):
        raise ValueError(f"r_init={r_init} out of range [1, {max(1, n - 1)}]")

    # rank-0 pre-check: a diagonal Sigma is its own noise matrix
    if linalg.max_offdiag(sigma) <= cfg.offdiag_tol(sigma):
        omega = np.zeros_like(sigma)
        primal = float(np.linalg.norm(sigma) ** 2)
        return _result_from_omega(instance, omega, primal, [], False)

    per_rank: list[RankAttempt] = []
    a, b, cones, _ = _dual_sdp_parts(sigma)
    prepared = PreparedProblem(a, b, cones, cfg.sdp)
    warm: SdpSolution | None = None
    for r in range(r_init, n):
        attempt, sol = solve_at_rank(
            sigma, r, instance.variant, cfg, prepared,
            warm if cfg.warm_start else None,
        )
        warm = sol
        per_rank.append(attempt)
        if attempt.accepted:
            result = _result_from_omega(
                instance, attempt.omega, attempt.dual_value, per_rank, False
            )
            # weak duality holds up to solver tolerance; a large negative
            # gap means the engine returned garbage
            if result.gap < -1e-5 * (1.0 + abs(result.primal_value)):
                raise RuntimeError(
                    f"weak duality violated at rank {r}: gap={result.gap:.3e}"
                )
            return result

    # trivial upper bound: shift out the smallest eigenvalue
    w_min = float(linalg.eig_sym(sigma).eigenvalues[-1])
    omega = linalg.symmetrize(sigma - w_min * np.eye(n))
    return _result_from_omega(instance, omega, float("nan"), per_rank, True)
