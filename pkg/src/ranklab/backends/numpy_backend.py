"""Pure-numpy lane: vectorized per-step updates, LAPACK banded solves.

Block functions evolve many steps per call so the caller can hand the
whole noise chunk over at once. Signatures are mirrored exactly by the
numba lane; keep the two in lockstep when changing anything here.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

NAME = "numpy"

# return codes for the PDE loop
PDE_OK = 0
PDE_MONOTONE_FAIL = 1
PDE_NONFINITE = 2


def rank_u(pos: np.ndarray) -> np.ndarray:
    """Rank fractions (1-based rank over count); ties keep input order."""
    n = pos.size
    order = np.argsort(pos, kind="mergesort")
    u = np.empty(n)
    u[order] = (np.arange(n) + 1.0) / n
    return u


def tilt_at(tt: np.ndarray, tx: np.ndarray, th: np.ndarray, t: float, x: np.ndarray) -> np.ndarray:
    """Bilinear tilt evaluation with constant extension outside the grid."""
    it = int(np.searchsorted(tt, t, side="right")) - 1
    if it < 0:
        it = 0
    if it > tt.size - 2:
        it = tt.size - 2
    w = (t - tt[it]) / (tt[it + 1] - tt[it])
    if w < 0.0:
        w = 0.0
    if w > 1.0:
        w = 1.0
    lo = np.interp(x, tx, th[it])
    hi = np.interp(x, tx, th[it + 1])
    return (1.0 - w) * lo + w * hi


def em_block(pos, noise, dt, k0, u_nodes, drift_nodes, sigma_nodes):
    """Advance the cloud noise.shape[0] steps under the base dynamics."""
    pos = pos.copy()
    sqdt = np.sqrt(dt)
    for k in range(noise.shape[0]):
        u = rank_u(pos)
        b = np.interp(u, u_nodes, drift_nodes)
        s = np.interp(u, u_nodes, sigma_nodes)
        pos = pos + b * dt + s * (sqdt * noise[k])
    return pos


def tilted_em_block(pos, noise, dt, k0, u_nodes, drift_nodes, sigma_nodes, tt, tx, th):
    """Advance under the tilted dynamics and accumulate the weight terms.

    The drift-gap factor g uses the pre-step state together with the
    step's own noise; the returned increments extend the running
    martingale and quadratic-variation sums.
    """
    pos = pos.copy()
    sqdt = np.sqrt(dt)
    m_inc = 0.0
    a_inc = 0.0
    for k in range(noise.shape[0]):
        t = (k0 + k) * dt
        u = rank_u(pos)
        b = np.interp(u, u_nodes, drift_nodes)
        s = np.interp(u, u_nodes, sigma_nodes)
        h = tilt_at(tt, tx, th, t, pos)
        g = 0.5 * h * s + b / s
        xi = noise[k]
        a_inc += float(g @ g) * dt
        m_inc += float(g @ xi) * sqdt
        pos = pos + (-0.5) * h * s * s * dt + s * (sqdt * xi)
    return pos, m_inc, a_inc


def pde_loop(R, x_nodes, nsteps, dt, dx, store_every, u_nodes, sigma_nodes, drift_nodes,
             tilted, tt, tx, th, scheme_explicit, upwind, repair_tol, out):
    """March the CDF slices forward and fill ``out`` every store_every steps.

    Implicit diffusion in flux form with the diffusivity lagged at the
    current slice (one tridiagonal solve per step) plus explicit upwind
    convection; scheme_explicit switches the diffusion term to explicit,
    upwind=False switches convection to centered differences.
    Returns (max monotonicity defect, status code, failing step).
    """
    nx = R.size
    mu = dt / (dx * dx)
    R = R.copy()
    out[0] = R
    max_defect = 0.0
    ab = np.empty((3, nx - 2))
    for k in range(nsteps):
        mid = 0.5 * (R[:-1] + R[1:])
        s_half = np.interp(mid, u_nodes, sigma_nodes)
        a_half = 0.5 * s_half * s_half
        if tilted:
            s_node = np.interp(R, u_nodes, sigma_nodes)
            v = -tilt_at(tt, tx, th, k * dt, x_nodes) * (0.5 * s_node * s_node)
        else:
            v = np.interp(R, u_nodes, drift_nodes)
        grad_minus = (R[1:-1] - R[:-2]) / dx
        grad_plus = (R[2:] - R[1:-1]) / dx
        vi = v[1:-1]
        if upwind:
            conv = -(np.maximum(vi, 0.0) * grad_minus + np.minimum(vi, 0.0) * grad_plus)
        else:
            conv = -vi * (0.5 * (grad_minus + grad_plus))
        if scheme_explicit:
            diffusion = (a_half[1:] * (R[2:] - R[1:-1]) - a_half[:-1] * (R[1:-1] - R[:-2])) / (dx * dx)
            new_interior = R[1:-1] + dt * (diffusion + conv)
        else:
            rhs = R[1:-1] + dt * conv
            rhs[-1] += mu * a_half[-1] * 1.0
            ab[0, 1:] = -mu * a_half[1:-1]
            ab[1, :] = 1.0 + mu * (a_half[:-1] + a_half[1:])
            ab[2, :-1] = -mu * a_half[1:-1]
            new_interior = solve_banded((1, 1), ab, rhs, check_finite=False)
        R[1:-1] = new_interior
        R[0] = 0.0
        R[-1] = 1.0
        if not np.all(np.isfinite(R)):
            return max_defect, PDE_NONFINITE, k
        defect = -float(np.min(np.diff(R)))
        if defect > max_defect:
            max_defect = defect
        if defect > repair_tol:
            return max_defect, PDE_MONOTONE_FAIL, k
        if defect > 0.0:
            R = np.minimum(np.maximum.accumulate(R), 1.0)
            R[0] = 0.0
            R[-1] = 1.0
        if (k + 1) % store_every == 0:
            out[(k + 1) // store_every] = R
    return max_defect, PDE_OK, -1
