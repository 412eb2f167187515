"""Heuristic baselines for minimum-rank factor analysis.

Three standard relaxations of the rank objective, each producing a
nonnegative diagonal noise estimate Delta with Sigma - Delta PSD:

* nuclear-norm (minimum-trace factor analysis): minimize tr(Sigma - Delta),
* dual Ky Fan norm epigraph for a target rank r: minimize
  max(lambda_max(Sigma - Delta), tr(Sigma - Delta) / r), which reduces
  to the nuclear-norm heuristic at r = 1,
* iterated log-det surrogate: linearize log det(Sigma - Delta + delta I)
  and solve the resulting trace subproblems to a fixed point.

The implied rank of Sigma - Delta is read with the shared numerical
rank tolerance so all methods are judged by the same yardstick.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import conic, linalg
from .conic import Cone, PreparedProblem, SolverConfig

NUCLEAR = "nuclear"
RSTAR = "rstar"
LOGDET = "logdet"


@dataclass(frozen=True)
class HeuristicResult:
    method: str
    delta: np.ndarray  # diagonal entries of the noise estimate
    implied_rank: int
    objective: float
    iterations: int = 0  # subproblem count (log-det only)
    r: int | None = None  # target rank (rstar only)
    surrogate_path: tuple[float, ...] = ()  # log-det values per step (log-det only)


def _check_input(sigma: np.ndarray) -> np.ndarray:
    sigma = linalg.symmetrize(sigma)
    if not linalg.is_psd(sigma, 1e-9):
        raise ValueError("sigma must be positive (semi)definite")
    return sigma


def _box_constraints(sigma: np.ndarray):
    """Rows for {d >= 0, Sigma - diag(d) PSD}; shared by nuclear and log-det."""
    n = sigma.shape[0]
    pn = conic.svec_dim(n)
    rows, cols, vals = [], [], []
    for i in range(n):
        rows.append(i)
        cols.append(i)
        vals.append(-1.0)
    for i in range(n):
        rows.append(n + conic.svec_entry_index(n, i, i))
        cols.append(i)
        vals.append(1.0)
    a = sp.csr_matrix((vals, (rows, cols)), shape=(n + pn, n))
    b = np.concatenate([np.zeros(n), conic.svec(sigma)])
    cones = (Cone(conic.NONNEG, n), Cone(conic.PSD, n))
    return a, b, cones


def nuclear_norm_solve(
    sigma: np.ndarray, config: SolverConfig | None = None
) -> HeuristicResult:
    """Minimum-trace factor analysis: maximize tr(Delta) over the feasible box."""
    sigma = _check_input(sigma)
    n = sigma.shape[0]
    a, b, cones = _box_constraints(sigma)
    prepared = PreparedProblem(a, b, cones, config)
    sol = prepared.solve(-np.ones(n), config).require_optimal("nuclear-norm SDP")
    d = sol.primal
    return HeuristicResult(
        method=NUCLEAR,
        delta=d,
        implied_rank=linalg.numerical_rank(sigma - np.diag(d)),
        objective=float(np.trace(sigma) - np.sum(d)),
    )


def rstar_solve(
    sigma: np.ndarray, r: int, config: SolverConfig | None = None
) -> HeuristicResult:
    """Low-rank-inducing norm minimization at target rank r.

    Minimizes the dual Ky Fan r-norm of the PSD residual Sigma - Delta,
    i.e. gamma subject to gamma I >= Sigma - Delta and
    r gamma >= tr(Sigma - Delta).
    """
    sigma = _check_input(sigma)
    n = sigma.shape[0]
    if not (1 <= r <= n):
        raise ValueError(f"rank r={r} out of range [1, {n}]")
    pn = conic.svec_dim(n)
    gamma = n  # variable layout: d_0..d_{n-1}, gamma
    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    base = 0
    for i in range(n):  # d >= 0
        add(base + i, i, -1.0)
    base += n
    for i in range(n):  # Sigma - diag(d) PSD
        add(base + conic.svec_entry_index(n, i, i), i, 1.0)
    base += pn
    for i in range(n):  # gamma I - Sigma + diag(d) PSD
        k = base + conic.svec_entry_index(n, i, i)
        add(k, i, -1.0)
        add(k, gamma, -1.0)
    base += pn
    for i in range(n):  # r gamma - tr(Sigma - diag(d)) >= 0
        add(base, i, -1.0)
    add(base, gamma, -float(r))

    sv = conic.svec(sigma)
    b = np.concatenate([np.zeros(n), sv, -sv, [-float(np.trace(sigma))]])
    a = sp.csr_matrix((vals, (rows, cols)), shape=(n + 2 * pn + 1, n + 1))
    cones = (
        Cone(conic.NONNEG, n),
        Cone(conic.PSD, n),
        Cone(conic.PSD, n),
        Cone(conic.NONNEG, 1),
    )
    prepared = PreparedProblem(a, b, cones, config)
    c = np.zeros(n + 1)
    c[gamma] = 1.0
    sol = prepared.solve(c, config).require_optimal(f"rank-{r} norm SDP")
    d = sol.primal[:n]
    return HeuristicResult(
        method=RSTAR,
        delta=d,
        implied_rank=linalg.numerical_rank(sigma - np.diag(d)),
        objective=float(sol.primal[gamma]),
        r=r,
    )


def logdet_solve(
    sigma: np.ndarray,
    delta_reg: float | None = None,
    max_iters: int = 50,
    config: SolverConfig | None = None,
) -> HeuristicResult:
    """Iterated linearization of log det(Sigma - Delta + delta_reg I).

    Each step maximizes tr(W_k Delta) with W_k the inverse of the
    regularized residual, over the same feasible box as the
    nuclear-norm heuristic.  Stops when consecutive iterates agree to
    1e-7 * ||Sigma||_F or the iteration cap is hit.
    """
    sigma = _check_input(sigma)
    n = sigma.shape[0]
    if delta_reg is None:
        delta_reg = 1e-6 * float(np.trace(sigma)) / n
    if delta_reg <= 0:
        raise ValueError("delta_reg must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    a, b, cones = _box_constraints(sigma)
    prepared = PreparedProblem(a, b, cones, config)
    stop_tol = 1e-7 * float(np.linalg.norm(sigma))
    eye = np.eye(n)

    d = np.zeros(n)
    surrogate: list[float] = []
    warm = None
    iters = 0
    for k in range(max_iters):
        resid = sigma - np.diag(d) + delta_reg * eye
        surrogate.append(float(np.linalg.slogdet(resid)[1]))
        w = linalg.symmetrize(np.linalg.inv(resid))
        sol = prepared.solve(-np.diag(w), config, warm=warm).require_optimal(
            f"log-det subproblem at iteration {k}"
        )
        warm = sol
        d_next = sol.primal
        iters = k + 1
        step = float(np.linalg.norm(d_next - d))
        d = d_next
        if step <= stop_tol:
            break
    resid = sigma - np.diag(d) + delta_reg * eye
    surrogate.append(float(np.linalg.slogdet(resid)[1]))
    return HeuristicResult(
        method=LOGDET,
        delta=d,
        implied_rank=linalg.numerical_rank(sigma - np.diag(d)),
        objective=surrogate[-1],
        iterations=iters,
        surrogate_path=tuple(surrogate),
    )
