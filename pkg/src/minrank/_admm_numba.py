"""Jitted inner loop for the ADMM conic solver.

Mirrors the numpy reference loop in conic.py exactly: same update
order, same residual schedule, same balancing rule.  Kept separate so
the solver still works (slowly) when numba is unavailable.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_INV_SQRT2 = 1.0 / np.sqrt(2.0)

TAG_ZERO = 0
TAG_NONNEG = 1
TAG_PSD = 2

STATUS_MAX_ITERS = 0
STATUS_OPTIMAL = 1
STATUS_INFEASIBLE = 2


@njit(cache=True)
def _csr_matvec(data, indices, indptr, x, out):
    n = out.shape[0]
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc


@njit(cache=True)
def _cho_solve(low, rhs, out):
    # low is the lower-triangular Cholesky factor; solves L L^T out = rhs
    n = low.shape[0]
    for i in range(n):
        acc = rhs[i]
        for j in range(i):
            acc -= low[i, j] * out[j]
        out[i] = acc / low[i, i]
    for i in range(n - 1, -1, -1):
        acc = out[i]
        for j in range(i + 1, n):
            acc -= low[j, i] * out[j]
        out[i] = acc / low[i, i]


@njit(cache=True)
def _psd_project_block(v, lo, m):
    a = np.empty((m, m))
    idx = lo
    for j in range(m):
        a[j, j] = v[idx]
        idx += 1
        for i in range(j + 1, m):
            val = v[idx] * _INV_SQRT2
            a[i, j] = val
            a[j, i] = val
            idx += 1
    w, q = np.linalg.eigh(a)
    b = np.zeros((m, m))
    for k in range(m):
        if w[k] > 0.0:
            wk = w[k]
            for i in range(m):
                qik = q[i, k] * wk
                for j in range(m):
                    b[i, j] += qik * q[j, k]
    idx = lo
    sqrt2 = np.sqrt(2.0)
    for j in range(m):
        v[idx] = b[j, j]
        idx += 1
        for i in range(j + 1, m):
            v[idx] = sqrt2 * b[i, j]
            idx += 1


@njit(cache=True)
def _project(v, tags, sizes, offsets):
    for t in range(tags.shape[0]):
        tag = tags[t]
        lo = offsets[t]
        if tag == TAG_ZERO:
            for k in range(lo, lo + sizes[t]):
                v[k] = 0.0
        elif tag == TAG_NONNEG:
            for k in range(lo, lo + sizes[t]):
                if v[k] < 0.0:
                    v[k] = 0.0
        else:
            _psd_project_block(v, lo, sizes[t])


@njit(cache=True)
def admm_loop(
    a_data, a_indices, a_indptr,
    at_data, at_indices, at_indptr,
    b, c,
    row_scale, col_scale, sigma_b, sigma_c,
    chol_low,
    tags, sizes, offsets,
    x, s, u,
    rho, alpha, tol, max_iters, check_every,
    balance_every, balance_ratio, balance_factor_max, rho_min, rho_max,
    divergence_scale, norm_b_un, norm_c_un,
):
    m = b.shape[0]
    n = x.shape[0]
    rhs = np.empty(n)
    h = np.empty(m)
    w_vec = np.empty(m)
    tmp_m = np.empty(m)
    tmp_n = np.empty(n)

    div_limit = divergence_scale * (1.0 + np.linalg.norm(b))
    status = STATUS_MAX_ITERS
    rel_p = np.inf
    rel_d = np.inf
    rel_g = np.inf
    it = 0
    while it < max_iters:
        it += 1
        # x-step: least squares against the cached factor
        for i in range(m):
            tmp_m[i] = b[i] - s[i] - u[i]
        _csr_matvec(at_data, at_indices, at_indptr, tmp_m, rhs)
        for j in range(n):
            rhs[j] -= c[j] / rho
        _cho_solve(chol_low, rhs, x)
        # s-step with over-relaxation, then the multiplier update
        _csr_matvec(a_data, a_indices, a_indptr, x, h)
        for i in range(m):
            h_rel = alpha * h[i] + (1.0 - alpha) * (b[i] - s[i])
            w_vec[i] = b[i] - h_rel - u[i]
            s[i] = w_vec[i]
        _project(s, tags, sizes, offsets)
        for i in range(m):
            u[i] = s[i] - w_vec[i]

        if it % check_every == 0 or it == max_iters:
            # unscaled residual norms computed from scaled quantities
            _csr_matvec(a_data, a_indices, a_indptr, x, h)
            acc_p = 0.0
            for i in range(m):
                ri = (h[i] + s[i] - b[i]) / row_scale[i]
                acc_p += ri * ri
            rel_p = sigma_b * np.sqrt(acc_p) / norm_b_un

            for i in range(m):
                tmp_m[i] = rho * u[i]
            _csr_matvec(at_data, at_indices, at_indptr, tmp_m, tmp_n)
            acc_d = 0.0
            for j in range(n):
                rj = (tmp_n[j] + c[j]) / col_scale[j]
                acc_d += rj * rj
            rel_d = sigma_c * np.sqrt(acc_d) / norm_c_un

            pobj = 0.0
            for j in range(n):
                pobj += c[j] * x[j]
            pobj *= sigma_b * sigma_c
            dobj = 0.0
            for i in range(m):
                dobj += b[i] * rho * u[i]
            dobj *= -sigma_b * sigma_c
            rel_g = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))

            if max(rel_p, max(rel_d, rel_g)) <= tol:
                status = STATUS_OPTIMAL
                break
            xn = 0.0
            for j in range(n):
                xn += x[j] * x[j]
            un = 0.0
            for i in range(m):
                un += u[i] * u[i]
            if np.sqrt(xn) > div_limit or np.sqrt(un) > divergence_scale:
                status = STATUS_INFEASIBLE
                break
            ratio = rel_p / max(rel_d, 1e-300)
            if it % balance_every == 0 and (
                ratio > balance_ratio or ratio < 1.0 / balance_ratio
            ):
                scale = np.sqrt(ratio)
                if scale > balance_factor_max:
                    scale = balance_factor_max
                elif scale < 1.0 / balance_factor_max:
                    scale = 1.0 / balance_factor_max
                new_rho = rho * scale
                if new_rho < rho_min:
                    new_rho = rho_min
                elif new_rho > rho_max:
                    new_rho = rho_max
                if new_rho != rho:
                    f = rho / new_rho
                    for i in range(m):
                        u[i] *= f
                    rho = new_rho
    return it, status, rel_p, rel_d, rel_g, rho
