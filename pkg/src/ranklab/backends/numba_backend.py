"""Numba lane: the same block functions as the numpy lane, compiled.

Loop bodies mirror numpy_backend step for step; only summation order
differs (scalar accumulation here, BLAS dot there), which is why the
lanes agree to rounding rather than bitwise.
"""
from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"

PDE_OK = 0
PDE_MONOTONE_FAIL = 1
PDE_NONFINITE = 2


@njit(cache=True, nogil=True)
def _rank_u(pos, u):
    n = pos.size
    order = np.argsort(pos, kind="mergesort")
    for r in range(n):
        u[order[r]] = (r + 1.0) / n


@njit(cache=True, nogil=True)
def _tilt_at(tt, tx, th, t, x, out):
    nt = tt.size
    it = np.searchsorted(tt, t, side="right") - 1
    if it < 0:
        it = 0
    if it > nt - 2:
        it = nt - 2
    w = (t - tt[it]) / (tt[it + 1] - tt[it])
    if w < 0.0:
        w = 0.0
    if w > 1.0:
        w = 1.0
    lo = np.interp(x, tx, th[it])
    hi = np.interp(x, tx, th[it + 1])
    for i in range(x.size):
        out[i] = (1.0 - w) * lo[i] + w * hi[i]


@njit(cache=True, nogil=True)
def em_block(pos, noise, dt, k0, u_nodes, drift_nodes, sigma_nodes):
    nsteps, n = noise.shape
    pos = pos.copy()
    u = np.empty(n)
    sqdt = np.sqrt(dt)
    for k in range(nsteps):
        _rank_u(pos, u)
        b = np.interp(u, u_nodes, drift_nodes)
        s = np.interp(u, u_nodes, sigma_nodes)
        for i in range(n):
            pos[i] = pos[i] + b[i] * dt + s[i] * sqdt * noise[k, i]
    return pos


@njit(cache=True, nogil=True)
def tilted_em_block(pos, noise, dt, k0, u_nodes, drift_nodes, sigma_nodes, tt, tx, th):
    nsteps, n = noise.shape
    pos = pos.copy()
    u = np.empty(n)
    h = np.empty(n)
    sqdt = np.sqrt(dt)
    m_inc = 0.0
    a_inc = 0.0
    for k in range(nsteps):
        t = (k0 + k) * dt
        _rank_u(pos, u)
        b = np.interp(u, u_nodes, drift_nodes)
        s = np.interp(u, u_nodes, sigma_nodes)
        _tilt_at(tt, tx, th, t, pos, h)
        for i in range(n):
            g = 0.5 * h[i] * s[i] + b[i] / s[i]
            xi = noise[k, i]
            a_inc += g * g * dt
            m_inc += g * sqdt * xi
            pos[i] = pos[i] - 0.5 * h[i] * s[i] * s[i] * dt + s[i] * sqdt * xi
    return pos, m_inc, a_inc


@njit(cache=True, nogil=True)
def pde_loop(R0, x_nodes, nsteps, dt, dx, store_every, u_nodes, sigma_nodes, drift_nodes,
             tilted, tt, tx, th, scheme_explicit, upwind, repair_tol, out):
    nx = R0.size
    mu = dt / (dx * dx)
    R = R0.copy()
    for j in range(nx):
        out[0, j] = R[j]
    max_defect = 0.0
    a_half = np.empty(nx - 1)
    v = np.empty(nx)
    h = np.empty(nx)
    rhs = np.empty(nx - 2)
    diag = np.empty(nx - 2)
    lower = np.empty(nx - 2)
    upper = np.empty(nx - 2)
    cp = np.empty(nx - 2)
    newR = np.empty(nx)
    for k in range(nsteps):
        mid = 0.5 * (R[:-1] + R[1:])
        s_half = np.interp(mid, u_nodes, sigma_nodes)
        for j in range(nx - 1):
            a_half[j] = 0.5 * s_half[j] * s_half[j]
        if tilted:
            s_node = np.interp(R, u_nodes, sigma_nodes)
            _tilt_at(tt, tx, th, k * dt, x_nodes, h)
            for j in range(nx):
                v[j] = -h[j] * 0.5 * s_node[j] * s_node[j]
        else:
            b_node = np.interp(R, u_nodes, drift_nodes)
            for j in range(nx):
                v[j] = b_node[j]
        if scheme_explicit:
            for j in range(1, nx - 1):
                gm = (R[j] - R[j - 1]) / dx
                gp = (R[j + 1] - R[j]) / dx
                vv = v[j]
                if upwind:
                    conv = -(max(vv, 0.0) * gm + min(vv, 0.0) * gp)
                else:
                    conv = -vv * (0.5 * (gm + gp))
                diffu = (a_half[j] * (R[j + 1] - R[j]) - a_half[j - 1] * (R[j] - R[j - 1])) / (dx * dx)
                newR[j] = R[j] + dt * (diffu + conv)
        else:
            for i in range(nx - 2):
                j = i + 1
                gm = (R[j] - R[j - 1]) / dx
                gp = (R[j + 1] - R[j]) / dx
                vv = v[j]
                if upwind:
                    conv = -(max(vv, 0.0) * gm + min(vv, 0.0) * gp)
                else:
                    conv = -vv * (0.5 * (gm + gp))
                rhs[i] = R[j] + dt * conv
                diag[i] = 1.0 + mu * (a_half[j - 1] + a_half[j])
                lower[i] = -mu * a_half[j - 1]
                upper[i] = -mu * a_half[j]
            rhs[nx - 3] += mu * a_half[nx - 2]
            # Thomas sweep; the matrix is strictly diagonally dominant
            cp[0] = upper[0] / diag[0]
            rhs[0] = rhs[0] / diag[0]
            for i in range(1, nx - 2):
                denom = diag[i] - lower[i] * cp[i - 1]
                cp[i] = upper[i] / denom
                rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom
            for i in range(nx - 4, -1, -1):
                rhs[i] = rhs[i] - cp[i] * rhs[i + 1]
            for i in range(nx - 2):
                newR[i + 1] = rhs[i]
        newR[0] = 0.0
        newR[nx - 1] = 1.0
        for j in range(nx):
            if not np.isfinite(newR[j]):
                return max_defect, PDE_NONFINITE, k
        defect = 0.0
        for j in range(nx - 1):
            d = newR[j] - newR[j + 1]
            if d > defect:
                defect = d
        if defect > max_defect:
            max_defect = defect
        if defect > repair_tol:
            return max_defect, PDE_MONOTONE_FAIL, k
        if defect > 0.0:
            run = 0.0
            for j in range(nx):
                x = newR[j]
                if x < run:
                    x = run
                if x > 1.0:
                    x = 1.0
                newR[j] = x
                run = x
            newR[0] = 0.0
            newR[nx - 1] = 1.0
        for j in range(nx):
            R[j] = newR[j]
        if (k + 1) % store_every == 0:
            row = (k + 1) // store_every
            for j in range(nx):
                out[row, j] = R[j]
    return max_defect, PDE_OK, -1
