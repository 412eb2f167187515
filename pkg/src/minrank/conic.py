"""First-order solver for standard-form conic programs.

Problem form::

    minimize    c' x
    subject to  A x + s = b,   s in K

where K is a product of zero, nonnegative-orthant and PSD cone blocks
applied to the slack s.  Equality constraints are zero-cone rows; all
decision variables x are free.  Symmetric m x m matrix slacks are
scalarized lower-triangle column-major with off-diagonal entries scaled
by sqrt(2), so Euclidean inner products of scalarized vectors equal
trace inner products of the matrices.

The dual pair is::

    maximize   -b' y
    subject to  A' y + c = 0,   y in K*

with K* the dual cone product (free on zero rows, self-dual otherwise).

Algorithm: two-block ADMM.  The x-step is a least-squares solve against
a cached Cholesky factor of A'A (A must have full column rank), the
s-step is a Euclidean cone projection, and the multiplier update comes
for free from Moreau decomposition, which keeps s in K, y in K* and
<s, y> = 0 at every iterate.  The problem data are Ruiz-equilibrated
once up front; the penalty parameter is rebalanced deterministically
from the residual ratio.  There is no randomized component anywhere,
so identical inputs yield bitwise-identical iterates.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

# the jitted inner loop is optional; the numpy loop below is the reference
_numba_kernel = None
_numba_checked = False


def _get_kernel():
    global _numba_kernel, _numba_checked
    if not _numba_checked:
        _numba_checked = True
        if os.environ.get("MINRANK_NO_NUMBA"):
            _numba_kernel = None
        else:
            try:
                from . import _admm_numba

                _numba_kernel = _admm_numba
            except ImportError:
                _numba_kernel = None
    return _numba_kernel

_SQRT2 = np.sqrt(2.0)

ZERO = "zero"
NONNEG = "nonneg"
PSD = "psd"

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITERS = "max_iters"
STATUS_INFEASIBLE = "infeasible_suspected"


class SolverFailure(RuntimeError):
    """Raised when a caller requires an optimal solution and did not get one."""

    def __init__(self, message: str, solution: "SdpSolution"):
        super().__init__(
            f"{message}: status={solution.status}, "
            f"primal_res={solution.primal_residual:.3e}, "
            f"dual_res={solution.dual_residual:.3e}, gap={solution.gap:.3e}"
        )
        self.solution = solution


@dataclass(frozen=True)
class Cone:
    """One cone block. size is the vector length for zero/nonneg blocks
    and the matrix order m for psd blocks."""

    tag: str
    size: int

    def __post_init__(self):
        if self.tag not in (ZERO, NONNEG, PSD):
            raise ValueError(f"unknown cone tag {self.tag!r}")
        if self.size < 1:
            raise ValueError(f"cone size must be >= 1, got {self.size}")

    @property
    def dim(self) -> int:
        if self.tag == PSD:
            return self.size * (self.size + 1) // 2
        return self.size


# ---------------------------------------------------------------------------
# scalarization of symmetric matrices


_svec_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _svec_index(m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cached = _svec_cache.get(m)
    if cached is None:
        ii, jj = [], []
        for j in range(m):
            for i in range(j, m):
                ii.append(i)
                jj.append(j)
        i_arr = np.array(ii, dtype=np.intp)
        j_arr = np.array(jj, dtype=np.intp)
        scale = np.where(i_arr == j_arr, 1.0, _SQRT2)
        cached = (i_arr, j_arr, scale)
        _svec_cache[m] = cached
    return cached


def svec_dim(m: int) -> int:
    return m * (m + 1) // 2


def svec(a: np.ndarray) -> np.ndarray:
    """Scalarize a symmetric matrix; <A,B> = svec(A) . svec(B)."""
    m = a.shape[0]
    i_arr, j_arr, scale = _svec_index(m)
    return a[i_arr, j_arr] * scale


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of svec."""
    d = v.shape[0]
    m = int(round((np.sqrt(8.0 * d + 1.0) - 1.0) / 2.0))
    if svec_dim(m) != d:
        raise ValueError(f"vector length {d} is not a triangular number")
    i_arr, j_arr, scale = _svec_index(m)
    a = np.zeros((m, m))
    vals = v / scale
    a[i_arr, j_arr] = vals
    a[j_arr, i_arr] = vals
    return a


def svec_entry_index(m: int, i: int, j: int) -> int:
    """Position of entry (i, j), i >= j, in the svec ordering for order m."""
    if not (0 <= j <= i < m):
        raise ValueError(f"need 0 <= j <= i < {m}, got ({i}, {j})")
    return j * m - j * (j - 1) // 2 + (i - j)


def project_cone(block: np.ndarray, cone: Cone) -> np.ndarray:
    """Euclidean projection of one scalarized block onto its cone."""
    block = np.asarray(block, dtype=float)
    if block.shape[0] != cone.dim:
        raise ValueError(f"block length {block.shape[0]} != cone dim {cone.dim}")
    if cone.tag == ZERO:
        return np.zeros_like(block)
    if cone.tag == NONNEG:
        return np.maximum(block, 0.0)
    a = smat(block)
    w, u = np.linalg.eigh(a)
    pos = w > 0.0
    if not np.any(pos):
        return np.zeros_like(block)
    up = u[:, pos]
    return svec((up * w[pos]) @ up.T)


# ---------------------------------------------------------------------------
# problem and solver types


@dataclass(frozen=True)
class SdpProblem:
    """Standard-form conic program (see module docstring)."""

    c: np.ndarray
    a: sp.csr_matrix
    b: np.ndarray
    cones: tuple[Cone, ...]

    @staticmethod
    def create(c, a, b, cones) -> "SdpProblem":
        c = np.asarray(c, dtype=float).ravel()
        b = np.asarray(b, dtype=float).ravel()
        cones = tuple(cones)
        a = sp.csr_matrix(a, dtype=float)
        m = sum(k.dim for k in cones)
        if a.shape != (m, c.shape[0]):
            raise ValueError(
                f"constraint matrix shape {a.shape} inconsistent with "
                f"{c.shape[0]} variables and total cone dimension {m}"
            )
        if b.shape[0] != m:
            raise ValueError(f"rhs length {b.shape[0]} != cone dimension {m}")
        return SdpProblem(c=c, a=a, b=b, cones=cones)

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    @property
    def num_rows(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iters: int = 100_000
    rho: float = 1.0
    over_relax: float = 1.6
    check_every: int = 25
    equil_iters: int = 15
    # deterministic rho rebalancing from the primal/dual residual ratio:
    # at most every balance_every iterations, and only when the ratio leaves
    # [1/balance_ratio, balance_ratio], rho is scaled by sqrt(ratio) clipped
    # to balance_factor_max per adjustment; infrequent damped adjustments
    # avoid thrashing
    balance_every: int = 500
    balance_ratio: float = 5.0
    balance_factor_max: float = 5.0
    rho_min: float = 1e-6
    rho_max: float = 1e6
    divergence_scale: float = 1e12


@dataclass(frozen=True)
class SdpSolution:
    primal: np.ndarray
    dual: np.ndarray
    slack: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    primal_objective: float
    dual_objective: float

    def require_optimal(self, what: str) -> "SdpSolution":
        if self.status != STATUS_OPTIMAL:
            raise SolverFailure(what, self)
        return self


# ---------------------------------------------------------------------------
# equilibration


def _ruiz_equilibrate(
    a: sp.csr_matrix, cones: tuple[Cone, ...], iters: int
) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal row/column scalings; rows of a PSD block share one factor."""
    m, n = a.shape
    d = np.ones(m)
    e = np.ones(n)
    abs_a = a.copy()
    abs_a.data = np.abs(abs_a.data)
    abs_a_csc = abs_a.tocsc()

    # row slices of the psd blocks (their scaling must stay uniform)
    psd_slices = []
    offset = 0
    for cone in cones:
        if cone.tag == PSD:
            psd_slices.append(slice(offset, offset + cone.dim))
        offset += cone.dim

    for _ in range(iters):
        scaled = abs_a.multiply(e[None, :]).multiply(d[:, None]).tocsr()
        row_max = np.zeros(m)
        for i in range(m):
            lo, hi = scaled.indptr[i], scaled.indptr[i + 1]
            if hi > lo:
                row_max[i] = scaled.data[lo:hi].max()
        for sl in psd_slices:
            block = row_max[sl]
            pos = block[block > 0]
            row_max[sl] = np.exp(np.log(pos).mean()) if pos.size else 0.0
        row_max[row_max == 0] = 1.0
        d /= np.sqrt(row_max)

        scaled_c = abs_a_csc.multiply(e[None, :]).multiply(d[:, None]).tocsc()
        col_max = np.zeros(n)
        for j in range(n):
            lo, hi = scaled_c.indptr[j], scaled_c.indptr[j + 1]
            if hi > lo:
                col_max[j] = scaled_c.data[lo:hi].max()
        col_max[col_max == 0] = 1.0
        e /= np.sqrt(col_max)
    return d, e


# ---------------------------------------------------------------------------
# prepared problem (factorization cache) and the ADMM loop


class PreparedProblem:
    """Equilibrated constraint data with a cached Cholesky factor.

    The factorization depends only on (A, b, cones), so one prepared
    problem can be solved repeatedly with different objectives, which is
    how the rank search and the iterative heuristics reuse work.
    """

    def __init__(self, a, b, cones, config: SolverConfig | None = None):
        config = config or SolverConfig()
        self.cones = tuple(cones)
        b = np.asarray(b, dtype=float).ravel()
        a = sp.csr_matrix(a, dtype=float)
        m, n = a.shape
        if m != b.shape[0] or m != sum(k.dim for k in self.cones):
            raise ValueError("inconsistent constraint dimensions")

        if config.equil_iters > 0:
            d, e = _ruiz_equilibrate(a, self.cones, config.equil_iters)
        else:
            d, e = np.ones(m), np.ones(n)
        self.row_scale = d
        self.col_scale = e
        self.a = a
        self.a_scaled = a.multiply(d[:, None]).multiply(e[None, :]).tocsr()
        self.at_scaled = self.a_scaled.T.tocsr()

        bs = d * b
        nb = float(np.linalg.norm(bs))
        self.sigma_b = nb if nb > 1e-9 else 1.0
        self.b = b
        self.b_scaled = bs / self.sigma_b

        gram = (self.at_scaled @ self.a_scaled).toarray()
        try:
            self.chol = scipy.linalg.cho_factor(gram, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise ValueError(
                "constraint matrix must have full column rank "
                "(every variable needs at least one constraint entry)"
            ) from exc
        self.chol_low = np.ascontiguousarray(np.tril(self.chol[0]))

        # cone block slices and psd orders for the projection loop
        self._slices: list[tuple[Cone, slice]] = []
        offset = 0
        for cone in self.cones:
            self._slices.append((cone, slice(offset, offset + cone.dim)))
            offset += cone.dim
        tag_codes = {ZERO: 0, NONNEG: 1, PSD: 2}
        self._tags = np.array([tag_codes[k.tag] for k in self.cones], dtype=np.int64)
        self._sizes = np.array([k.size for k in self.cones], dtype=np.int64)
        self._offsets = np.array(
            [sl.start for _, sl in self._slices], dtype=np.int64
        )

    def _project(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        for cone, sl in self._slices:
            if cone.tag == ZERO:
                out[sl] = 0.0
            elif cone.tag == NONNEG:
                np.maximum(v[sl], 0.0, out=out[sl])
            else:
                out[sl] = project_cone(v[sl], cone)
        return out

    def solve(
        self,
        c,
        config: SolverConfig | None = None,
        warm: SdpSolution | None = None,
    ) -> SdpSolution:
        cfg = config or SolverConfig()
        c = np.asarray(c, dtype=float).ravel()
        if c.shape[0] != self.a.shape[1]:
            raise ValueError(f"objective length {c.shape[0]} != {self.a.shape[1]} variables")

        cs = self.col_scale * c
        nc = float(np.linalg.norm(cs))
        sigma_c = nc if nc > 1e-9 else 1.0
        c_scaled = cs / sigma_c

        rho = cfg.rho
        alpha = cfg.over_relax
        b_scaled = self.b_scaled

        if warm is not None:
            x = warm.primal / (self.sigma_b * self.col_scale)
            s = self.row_scale * warm.slack / self.sigma_b
            u = (warm.dual / (sigma_c * self.row_scale)) / rho
        else:
            x = np.zeros(c.shape[0])
            s = self._project(b_scaled.copy())
            u = np.zeros_like(b_scaled)

        norm_b = 1.0 + float(np.linalg.norm(self.b))
        norm_c = 1.0 + float(np.linalg.norm(c))

        kernel = _get_kernel()
        if kernel is not None:
            it, code, rel_p, rel_d, rel_g, rho = kernel.admm_loop(
                self.a_scaled.data, self.a_scaled.indices, self.a_scaled.indptr,
                self.at_scaled.data, self.at_scaled.indices, self.at_scaled.indptr,
                b_scaled, c_scaled,
                self.row_scale, self.col_scale, self.sigma_b, sigma_c,
                self.chol_low,
                self._tags, self._sizes, self._offsets,
                x, s, u,
                rho, alpha, cfg.tol, cfg.max_iters, cfg.check_every,
                cfg.balance_every, cfg.balance_ratio, cfg.balance_factor_max,
                cfg.rho_min, cfg.rho_max,
                cfg.divergence_scale, norm_b, norm_c,
            )
            status = (STATUS_MAX_ITERS, STATUS_OPTIMAL, STATUS_INFEASIBLE)[code]
        else:
            x, s, u, rho, it, status, rel_p, rel_d, rel_g = self._loop_numpy(
                x, s, u, rho, alpha, c, c_scaled, sigma_c, cfg, norm_b, norm_c
            )

        x_out = self.sigma_b * (self.col_scale * x)
        s_out = self.sigma_b * (s / self.row_scale)
        y_out = sigma_c * (self.row_scale * (rho * u))
        pobj = float(c @ x_out)
        dobj = float(-self.b @ y_out)
        return SdpSolution(
            primal=x_out,
            dual=y_out,
            slack=s_out,
            status=status,
            primal_residual=rel_p,
            dual_residual=rel_d,
            gap=rel_g,
            iterations=it,
            primal_objective=pobj,
            dual_objective=dobj,
        )

    def _loop_numpy(self, x, s, u, rho, alpha, c, c_scaled, sigma_c, cfg, norm_b, norm_c):
        # reference implementation of the jitted loop in _admm_numba
        b_scaled = self.b_scaled
        div_limit = cfg.divergence_scale * (1.0 + float(np.linalg.norm(b_scaled)))
        status = STATUS_MAX_ITERS
        rel_p = rel_d = rel_g = np.inf
        it = 0
        while it < cfg.max_iters:
            it += 1
            rhs = self.at_scaled @ (b_scaled - s - u) - c_scaled / rho
            x = scipy.linalg.cho_solve(self.chol, rhs)
            h = self.a_scaled @ x
            h_rel = alpha * h + (1.0 - alpha) * (b_scaled - s)
            w = b_scaled - h_rel - u
            s = self._project(w)
            u = s - w

            if it % cfg.check_every == 0 or it == cfg.max_iters:
                rel_p, rel_d, rel_g = self._residuals(
                    x, s, u, rho, sigma_c, c, norm_b, norm_c
                )
                if max(rel_p, rel_d, rel_g) <= cfg.tol:
                    status = STATUS_OPTIMAL
                    break
                if (
                    float(np.linalg.norm(x)) > div_limit
                    or float(np.linalg.norm(u)) > cfg.divergence_scale
                ):
                    status = STATUS_INFEASIBLE
                    break
                ratio = rel_p / max(rel_d, 1e-300)
                if it % cfg.balance_every == 0 and (
                    ratio > cfg.balance_ratio or ratio < 1.0 / cfg.balance_ratio
                ):
                    scale = float(
                        np.clip(
                            np.sqrt(ratio),
                            1.0 / cfg.balance_factor_max,
                            cfg.balance_factor_max,
                        )
                    )
                    new_rho = float(np.clip(rho * scale, cfg.rho_min, cfg.rho_max))
                    if new_rho != rho:
                        u *= rho / new_rho
                        rho = new_rho
        return x, s, u, rho, it, status, rel_p, rel_d, rel_g

    def _residuals(self, x, s, u, rho, sigma_c, c, norm_b, norm_c):
        # unscaled residual norms, relative to problem scale
        x_un = self.sigma_b * (self.col_scale * x)
        s_un = self.sigma_b * (s / self.row_scale)
        y_un = sigma_c * (self.row_scale * (rho * u))
        rp = self.a @ x_un + s_un - self.b
        rd = self.a.T @ y_un + c
        pobj = float(c @ x_un)
        dobj = float(-self.b @ y_un)
        rel_p = float(np.linalg.norm(rp)) / norm_b
        rel_d = float(np.linalg.norm(rd)) / norm_c
        rel_g = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        return rel_p, rel_d, rel_g


def solve(problem: SdpProblem, config: SolverConfig | None = None) -> SdpSolution:
    """Solve a standard-form conic program."""
    prepared = PreparedProblem(problem.a, problem.b, problem.cones, config)
    return prepared.solve(problem.c, config)


def dump_problem(problem: SdpProblem) -> str:
    """Plain-text standard-form listing for cross-checks with other solvers."""
    buf = io.StringIO()
    buf.write(f"vars {problem.num_vars}\n")
    buf.write("minimize\n")
    for j, v in enumerate(problem.c):
        if v != 0.0:
            buf.write(f"  c {j} {v:.17g}\n")
    buf.write("constraints  A x + s = b,  s in K\n")
    coo = problem.a.tocoo()
    for i, j, v in zip(coo.row, coo.col, coo.data):
        buf.write(f"  A {i} {j} {v:.17g}\n")
    for i, v in enumerate(problem.b):
        if v != 0.0:
            buf.write(f"  b {i} {v:.17g}\n")
    buf.write("cones\n")
    for cone in problem.cones:
        buf.write(f"  {cone.tag} {cone.size}\n")
    return buf.getvalue()
