"""Action functional on CDF paths, its variational dual, and tilt recovery.

The central quantity charges a path by how far it deviates from the
zero-cost evolution: with num = R_t - (A(R)R_x)_x + b(R)R_x,

    J = 1/2 * integral of num^2 / (sigma(R)^2 * R_x) over time and space,

a weighted squared residual that vanishes exactly on solver-limit paths.
Cells whose slope R_x sits below a relative floor follow the 0/0 = 0
convention: they contribute nothing to J, and their squared-numerator
mass is tracked separately; when that mass is non-negligible the path is
declared outside the finite-cost class and J returns the +inf sentinel.

The variational dual maximizes a linear-minus-quadratic form over a
finite span of smooth test functions. Both routes share the same
numerator field, quadrature weights, and floor mask, which makes the
dual a certified lower bound on the discrete J up to solve roundoff.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .coefficients import RankCoefficients
from .errors import NumericsError
from .measures import GridCdfPath
from .particle import TiltField
from .pde import DiagnosticsReport, regularity_diagnostics

__all__ = [
    "RateOptions",
    "RateReport",
    "BasisElement",
    "TestBasis",
    "VariationalResult",
    "rate_functional",
    "recover_tilt",
    "variational_rate",
    "default_basis",
]


@dataclass(frozen=True)
class RateOptions:
    eps_floor_rel: float = 1e-10  # slope floor, relative to the path's max slope
    tau_support_rel: float = 1e-6  # outside-mass budget, relative to total num^2 mass

    def __post_init__(self) -> None:
        if self.eps_floor_rel <= 0 or self.tau_support_rel <= 0:
            raise ValueError("floor parameters must be positive")


@dataclass(frozen=True, eq=False)
class RateReport:
    """Rate evaluation with its integrand field and support accounting.

    value is math.inf when the below-floor numerator mass exceeds the
    support budget; the JSON form carries null for J in that case and
    the finite flag tells the two apart.
    """

    value: float
    finite: bool
    outside_mass: float
    total_mass: float
    eps_floor: float
    tau_support: float
    grid: dict
    integrand: np.ndarray
    t_grid: np.ndarray
    x_grid: np.ndarray
    diagnostics: DiagnosticsReport

    def to_json(self) -> str:
        payload = {
            "J": self.value if self.finite else None,
            "finite": self.finite,
            "outside_mass": self.outside_mass,
            "grid": self.grid,
            "floors": {"eps_floor": self.eps_floor, "tau_support": self.tau_support},
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def write_integrand_csv(self, fileobj) -> None:
        fileobj.write("t,x,integrand\n")
        for i, t in enumerate(self.t_grid):
            for j, x in enumerate(self.x_grid):
                fileobj.write(
                    f"{float(t)!r},{float(x)!r},{float(self.integrand[i, j])!r}\n"
                )


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.zeros(nodes.size)
    d = np.diff(nodes)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _uniform_dx(x: np.ndarray) -> float:
    d = np.diff(x)
    if np.max(d) - np.min(d) > 1e-9 * np.max(d):
        raise ValueError("rate evaluation expects a uniform space grid")
    return float(d[0])


def _residual_fields(path: GridCdfPath, coeffs: RankCoefficients):
    """Numerator field and companions on the stored lattice.

    Time derivative by centered differences (second-order one-sided at
    the stored endpoints); the diffusion divergence in flux-difference
    form with the coefficient at interface midpoints, matching the
    solver's discrete operator; edge columns copy their neighbors.
    Returns (num, slope, sigma_vals, diff_div, t_w, x_w).
    """
    R = path.values
    t = path.t_grid
    x = path.x_grid
    dx = _uniform_dx(x)
    edge = 2 if t.size >= 3 else 1
    r_t = np.gradient(R, t, axis=0, edge_order=edge)
    slope = np.gradient(R, x, axis=1, edge_order=2)

    mid = 0.5 * (R[:, :-1] + R[:, 1:])
    s_half = np.interp(mid, coeffs.u_nodes, coeffs.sigma_nodes)
    flux = (0.5 * s_half**2) * (R[:, 1:] - R[:, :-1]) / dx
    div = np.empty_like(R)
    div[:, 1:-1] = (flux[:, 1:] - flux[:, :-1]) / dx
    div[:, 0] = div[:, 1]
    div[:, -1] = div[:, -2]

    sigma_vals = np.interp(R, coeffs.u_nodes, coeffs.sigma_nodes)
    b_vals = np.interp(R, coeffs.u_nodes, coeffs.drift_nodes)
    num = r_t - div + b_vals * slope
    return num, slope, sigma_vals, div, _trapezoid_weights(t), _trapezoid_weights(x)


def rate_functional(
    path: GridCdfPath,
    coeffs: RankCoefficients,
    options: RateOptions | None = None,
) -> RateReport:
    """Evaluate the action of a stored CDF path under the given tables."""
    opts = options or RateOptions()
    num, slope, sigma_vals, _, t_w, x_w = _residual_fields(path, coeffs)
    w = np.outer(t_w, x_w)
    floor = opts.eps_floor_rel * float(np.max(slope))
    mask = slope >= floor

    num_sq_w = w * num**2
    total_mass = float(np.sum(num_sq_w))
    outside_mass = float(np.sum(num_sq_w[~mask]))
    tau = opts.tau_support_rel * total_mass

    integrand = np.zeros_like(num)
    denom = sigma_vals**2 * np.where(mask, slope, 1.0)
    integrand[mask] = (0.5 * num**2 / denom)[mask]
    finite = outside_mass <= tau
    value = float(np.sum(w * integrand)) if finite else math.inf

    return RateReport(
        value=value,
        finite=finite,
        outside_mass=outside_mass,
        total_mass=total_mass,
        eps_floor=floor,
        tau_support=tau,
        grid={
            "nt": int(path.t_grid.size),
            "nx": int(path.x_grid.size),
            "t_final": float(path.t_grid[-1]),
            "x_min": float(path.x_grid[0]),
            "x_max": float(path.x_grid[-1]),
        },
        integrand=integrand,
        t_grid=path.t_grid,
        x_grid=path.x_grid,
        diagnostics=regularity_diagnostics(path),
    )


def recover_tilt(
    path: GridCdfPath,
    coeffs: RankCoefficients,
    core_rel_floor: float = 0.1,
) -> TiltField:
    """Back out the tilt that would produce this path as its limit.

    On each slice the ratio (R_t - (A(R)R_x)_x) / (A(R) R_x) is formed
    where the slope clears a per-slice relative floor, then extended
    outward by its nearest core value so the field stays bounded.
    """
    num, slope, sigma_vals, div, _, _ = _residual_fields(path, coeffs)
    b_vals = np.interp(path.values, coeffs.u_nodes, coeffs.drift_nodes)
    numerator = num - b_vals * slope  # R_t - divergence, drift excluded
    a_vals = 0.5 * sigma_vals**2

    values = np.empty_like(numerator)
    for k in range(values.shape[0]):
        s = slope[k]
        s_max = float(np.max(s))
        if s_max <= 0.0:
            raise ValueError(f"slice {k} has no slope core; cannot recover a tilt")
        core = s >= core_rel_floor * s_max
        idx = np.flatnonzero(core)
        row = np.zeros_like(s)
        row[core] = numerator[k, core] / (a_vals[k, core] * s[core])
        row[: idx[0]] = row[idx[0]]
        row[idx[-1] + 1 :] = row[idx[-1]]
        values[k] = row
    t = path.t_grid
    if t.size < 2:
        raise ValueError("tilt recovery needs at least two stored slices")
    return TiltField(t.copy(), path.x_grid.copy(), values)


# ---------------------------------------------------------------------------
# variational dual over finite test-function spans


@dataclass(frozen=True, eq=False)
class BasisElement:
    """Separable test function value(t) * profile(x) with evaluable derivatives."""

    name: str
    x_value: object
    x_deriv: object
    x_second: object
    t_value: object
    t_deriv: object

    def grid_eval(self, t: np.ndarray, x: np.ndarray):
        """(g, g_t, g_x, g_xx) as outer products on the lattice."""
        tv = np.asarray(self.t_value(t), dtype=float)
        td = np.asarray(self.t_deriv(t), dtype=float)
        xv = np.asarray(self.x_value(x), dtype=float)
        xd = np.asarray(self.x_deriv(x), dtype=float)
        xs = np.asarray(self.x_second(x), dtype=float)
        return (
            np.outer(tv, xv),
            np.outer(td, xv),
            np.outer(tv, xd),
            np.outer(tv, xs),
        )


@dataclass(frozen=True, eq=False)
class TestBasis:
    elements: tuple

    __test__ = False  # keep pytest from collecting this as a test class

    def __post_init__(self) -> None:
        if len(self.elements) == 0:
            raise ValueError("basis must contain at least one element")

    def __len__(self) -> int:
        return len(self.elements)

    def subset(self, count: int) -> "TestBasis":
        return TestBasis(self.elements[:count])


@dataclass(frozen=True, eq=False)
class VariationalResult:
    value: float
    coefficients: np.ndarray
    basis: TestBasis
    gram_rank: int


def _gaussian_bump(center: float, width: float):
    inv2 = 1.0 / (width * width)

    def value(x):
        z = np.asarray(x, dtype=float) - center
        return np.exp(-0.5 * z * z * inv2)

    def deriv(x):
        z = np.asarray(x, dtype=float) - center
        return -z * inv2 * np.exp(-0.5 * z * z * inv2)

    def second(x):
        z = np.asarray(x, dtype=float) - center
        return (z * z * inv2 - 1.0) * inv2 * np.exp(-0.5 * z * z * inv2)

    return value, deriv, second


def _windowed_linear(lo: float, hi: float, margin_frac: float = 0.1):
    # identity profile tapered to zero at the window edges by a cubic step;
    # the two tapers never overlap (margin is a tenth of the window)
    m = margin_frac * (hi - lo)

    def taper(x):
        x = np.asarray(x, dtype=float)
        s = np.ones_like(x)
        sp = np.zeros_like(x)
        spp = np.zeros_like(x)
        zl = (x - lo) / m
        left = zl < 1.0
        zi = np.clip(zl, 0.0, None)
        s = np.where(left, 3.0 * zi**2 - 2.0 * zi**3, s)
        sp = np.where(left, (6.0 * zi - 6.0 * zi**2) / m, sp)
        spp = np.where(left, (6.0 - 12.0 * zi) / (m * m), spp)
        zr = (hi - x) / m
        right = zr < 1.0
        zi = np.clip(zr, 0.0, None)
        s = np.where(right, 3.0 * zi**2 - 2.0 * zi**3, s)
        sp = np.where(right, -(6.0 * zi - 6.0 * zi**2) / m, sp)
        spp = np.where(right, (6.0 - 12.0 * zi) / (m * m), spp)
        s = np.where((x <= lo) | (x >= hi), 0.0, s)
        sp = np.where((x <= lo) | (x >= hi), 0.0, sp)
        spp = np.where((x <= lo) | (x >= hi), 0.0, spp)
        return s, sp, spp

    def value(x):
        x = np.asarray(x, dtype=float)
        s, _, _ = taper(x)
        return x * s

    def deriv(x):
        x = np.asarray(x, dtype=float)
        s, sp, _ = taper(x)
        return s + x * sp

    def second(x):
        x = np.asarray(x, dtype=float)
        _, sp, spp = taper(x)
        return 2.0 * sp + x * spp

    return value, deriv, second


def _time_poly(order: int, t_final: float):
    if order == 0:
        return (lambda t: np.ones_like(np.asarray(t, dtype=float)),
                lambda t: np.zeros_like(np.asarray(t, dtype=float)))
    scale = 1.0 / t_final

    def value(t):
        return (np.asarray(t, dtype=float) * scale) ** order

    def deriv(t):
        tt = np.asarray(t, dtype=float)
        return order * scale * (tt * scale) ** (order - 1)

    return value, deriv


def default_basis(
    path: GridCdfPath,
    n_centers: int = 9,
    width_cells: float = 8.0,
    t_orders: tuple = (0, 1, 2),
) -> TestBasis:
    """Windowed linear element plus Gaussian bumps, times low-order time polys.

    Bump centers span the region where the path's slope is non-negligible;
    widths cover at least width_cells grid cells and are widened to keep
    neighboring bumps overlapping when centers are sparse.
    """
    x = path.x_grid
    dx = _uniform_dx(x)
    slope = np.gradient(path.values, x, axis=1, edge_order=2)
    col_max = np.max(slope, axis=0)
    occupied = np.flatnonzero(col_max >= 1e-3 * float(np.max(col_max)))
    lo, hi = float(x[occupied[0]]), float(x[occupied[-1]])
    centers = np.linspace(lo, hi, n_centers)
    spacing = (hi - lo) / max(1, n_centers - 1)
    width = max(width_cells * dx, 0.75 * spacing)
    t_final = float(path.t_grid[-1])

    elements = []
    lin = _windowed_linear(float(x[0]), float(x[-1]))
    for order in t_orders:
        tv, td = _time_poly(order, t_final)
        elements.append(BasisElement(f"linear_t{order}", lin[0], lin[1], lin[2], tv, td))
        for i, c in enumerate(centers):
            bump = _gaussian_bump(float(c), width)
            elements.append(
                BasisElement(f"bump{i}_t{order}", bump[0], bump[1], bump[2], tv, td)
            )
    return TestBasis(tuple(elements))


def variational_rate(
    path: GridCdfPath,
    coeffs: RankCoefficients,
    basis: TestBasis,
    options: RateOptions | None = None,
) -> VariationalResult:
    """Maximize the linear-minus-quadratic dual over the basis span.

    Assembles v_a = -sum w * num * (g_a)_x and the Gram matrix
    M_ab = sum w * (g_a)_x (g_b)_x A(R) R_x over the same masked cells
    and weights as rate_functional, then returns 1/4 v' M^+ v with the
    attaining coefficients. By construction the value never exceeds the
    discrete J beyond solve roundoff.
    """
    opts = options or RateOptions()
    num, slope, sigma_vals, _, t_w, x_w = _residual_fields(path, coeffs)
    w = np.outer(t_w, x_w)
    floor = opts.eps_floor_rel * float(np.max(slope))
    mask = slope >= floor
    a_vals = 0.5 * sigma_vals**2

    kernel_v = np.where(mask, w * num, 0.0)
    kernel_m = np.where(mask, w * a_vals * slope, 0.0)

    # separable elements let the space and time axes contract one at a time,
    # so no (basis x time x space) field is ever materialized
    nb = len(basis)
    t, x = path.t_grid, path.x_grid
    t_prof = np.empty((nb, t.size))
    x_der = np.empty((nb, x.size))
    for a, elem in enumerate(basis.elements):
        t_prof[a] = np.asarray(elem.t_value(t), dtype=float)
        x_der[a] = np.asarray(elem.x_deriv(x), dtype=float)

    v = -np.einsum("at,ta->a", t_prof, kernel_v @ x_der.T)
    slice_gram = np.einsum("ax,tx,bx->abt", x_der, kernel_m, x_der, optimize=True)
    M = np.einsum("at,abt,bt->ab", t_prof, slice_gram, t_prof, optimize=True)
    M = 0.5 * (M + M.T)

    eigvals, eigvecs = np.linalg.eigh(M)
    scale = float(np.max(np.abs(eigvals))) if nb else 0.0
    if scale > 0.0 and float(eigvals[0]) < -1e-10 * scale:
        raise NumericsError(
            f"Gram matrix indefinite beyond tolerance (min eig {eigvals[0]:.3e})"
        )
    cut = 1e-12 * scale
    proj = eigvecs.T @ v
    keep = eigvals > cut
    inv_proj = np.zeros_like(proj)
    inv_proj[keep] = proj[keep] / eigvals[keep]
    value = 0.25 * float(proj @ inv_proj)
    coefficients = 0.5 * (eigvecs @ inv_proj)
    return VariationalResult(
        value=value,
        coefficients=coefficients,
        basis=basis,
        gram_rank=int(np.count_nonzero(keep)),
    )
