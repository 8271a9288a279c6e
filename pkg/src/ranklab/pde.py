"""Deterministic solver for the scaling-limit CDF evolution.

The forward equation advances a CDF slice R(t, x) by
diffusion-in-flux-form minus rank-drift convection:

    dR/dt = d/dx(A(R) dR/dx) - b(R) dR/dx,

with A the diffusivity table evaluated at the CDF value. The tilted
variant replaces the convection velocity by minus the tilt times A(R),
which pushes mass against the tilt. Space is a uniform node grid with
pinned 0/1 end values (the window must capture the initial law to
within eps_bc); time stepping is IMEX by default: implicit diffusion
with the diffusivity lagged at the current slice (one tridiagonal solve
per step) and explicit first-order upwind convection under a CFL bound.
A fully explicit scheme is available for cross-checks and inherits the
usual diffusive step restriction.

Stored slices subsample the time axis (``store_every``); everything
downstream (rate evaluation, diagnostics, distances) operates on the
stored slices, so time-derivative stencils see the stored spacing.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .backends import backend_name, get_backend
from .coefficients import InitialDistribution, RankCoefficients
from .errors import ConfigError, NumericsError
from .measures import GridCdfPath
from .particle import TiltField

__all__ = [
    "PdeGrid",
    "SolverOptions",
    "DiagnosticsReport",
    "solve_forward",
    "solve_tilted",
    "regularity_diagnostics",
]


@dataclass(frozen=True)
class PdeGrid:
    """Uniform space-time lattice; spans must be whole multiples of the steps."""

    x_min: float
    x_max: float
    dx: float
    dt: float
    final_time: float
    store_every: int = 0  # 0 picks the coarsest stride keeping <= max_stored slices

    def __post_init__(self) -> None:
        if not (self.x_max > self.x_min and self.dx > 0 and self.dt > 0 and self.final_time > 0):
            raise ConfigError("grid needs x_max > x_min and positive dx, dt, final_time")
        for span, step, label in (
            (self.x_max - self.x_min, self.dx, "dx"),
            (self.final_time, self.dt, "dt"),
        ):
            ratio = span / step
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ConfigError(f"{label} must divide its span to within 1e-9")
        if self.store_every < 0:
            raise ConfigError("store_every must be non-negative")

    @property
    def nx(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx)) + 1

    @property
    def n_steps(self) -> int:
        return int(round(self.final_time / self.dt))

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def resolved_store_every(self, max_stored: int) -> int:
        if self.store_every > 0:
            return min(self.store_every, self.n_steps)
        return max(1, math.ceil(self.n_steps / max(1, max_stored - 1)))

    def cfl_report(self, v_max: float, a_max: float) -> dict:
        """Stability ratios for this lattice at the given velocity/diffusivity caps."""
        return {
            "convection": abs(v_max) * self.dt / self.dx,
            "diffusion": a_max * self.dt / self.dx**2,
        }


# flooring a vanishing diffusivity at this level keeps the tridiagonal
# solves well posed without visibly perturbing non-degenerate runs
EPS_DIFFUSIVITY = 1e-10


@dataclass(frozen=True)
class SolverOptions:
    scheme: str = "imex"
    eps_bc: float = 1e-8
    repair_tol: float = 1e-12
    cfl_limit: float = 0.5
    max_stored: int = 1201
    upwind: bool = True  # False switches convection to centered differences
    mass_leak_tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.scheme not in ("imex", "explicit"):
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected 'imex' or 'explicit'")
        if not (0 < self.cfl_limit <= 1.0):
            raise ConfigError("cfl_limit must lie in (0, 1]")
        if self.eps_bc <= 0 or self.repair_tol < 0 or self.max_stored < 2:
            raise ConfigError("eps_bc must be positive, repair_tol >= 0, max_stored >= 2")
        if self.mass_leak_tol <= 0:
            raise ConfigError("mass_leak_tol must be positive")


_DUMMY_TILT_T = np.array([0.0, 1.0])
_DUMMY_TILT_X = np.array([0.0, 1.0])
_DUMMY_TILT_H = np.zeros((2, 2))


def _run_solver(
    coeffs: RankCoefficients,
    init: InitialDistribution,
    grid: PdeGrid,
    options: SolverOptions,
    tilt: TiltField | None,
) -> GridCdfPath:
    x = grid.x_nodes
    R0 = np.asarray(init.cdf(x), dtype=float)
    if R0[0] > options.eps_bc or 1.0 - R0[-1] > options.eps_bc:
        raise ConfigError(
            f"window [{grid.x_min}, {grid.x_max}] misses initial mass "
            f"(edges {R0[0]:.3g}, {1.0 - R0[-1]:.3g} vs eps_bc {options.eps_bc:g}); widen it"
        )
    R0[0] = 0.0
    R0[-1] = 1.0

    sigma_nodes = np.asarray(coeffs.sigma_nodes, dtype=float)
    sigma_floor = math.sqrt(2.0 * EPS_DIFFUSIVITY)
    floored = bool(coeffs.sigma_min < sigma_floor)
    if floored:
        sigma_nodes = np.maximum(sigma_nodes, sigma_floor)
    a_max = float(np.max(0.5 * sigma_nodes**2))
    if tilt is None:
        v_max = float(np.max(np.abs(coeffs.drift_nodes)))
        tt, tx, th = _DUMMY_TILT_T, _DUMMY_TILT_X, _DUMMY_TILT_H
    else:
        v_max = tilt.h_max * a_max
        tt, tx, th = tilt.t_grid, tilt.x_grid, tilt.values
        if not tilt.covers(0.0, grid.final_time, grid.x_min, grid.x_max):
            warnings.warn(
                "tilt grid does not cover the solver window; nearest values extend constantly",
                stacklevel=3,
            )
    ratios = grid.cfl_report(v_max, a_max)
    cfl = ratios["convection"]
    if cfl > options.cfl_limit:
        raise NumericsError(
            f"convection CFL {cfl:.3g} exceeds {options.cfl_limit:g}; reduce dt or refine dx"
        )
    explicit = options.scheme == "explicit"
    if explicit and ratios["diffusion"] > 0.5:
        raise NumericsError(
            f"explicit diffusion number {ratios['diffusion']:.3g} exceeds 0.5; reduce dt"
        )

    backend = get_backend()
    n_steps = grid.n_steps
    stride = grid.resolved_store_every(options.max_stored)
    n_full = (n_steps // stride) * stride
    rows = n_full // stride + 1
    out = np.empty((rows, grid.nx))
    max_defect, code, bad_step = backend.pde_loop(
        R0, x, n_full, grid.dt, grid.dx, stride,
        coeffs.u_nodes, sigma_nodes, coeffs.drift_nodes,
        tilt is not None, tt, tx, th, explicit, options.upwind, options.repair_tol, out,
    )
    stored_idx = np.arange(rows) * stride
    if code == 0 and n_steps > n_full:
        rem = n_steps - n_full
        tail = np.empty((2, grid.nx))
        defect2, code, bad2 = backend.pde_loop(
            out[-1].copy(), x, rem, grid.dt, grid.dx, rem,
            coeffs.u_nodes, sigma_nodes, coeffs.drift_nodes,
            tilt is not None, tt, tx, th, explicit, options.upwind, options.repair_tol, tail,
        )
        max_defect = max(max_defect, defect2)
        bad_step = n_full + bad2
        out = np.vstack([out, tail[1:]])
        stored_idx = np.append(stored_idx, n_steps)
    if code == 1:
        raise NumericsError(
            f"monotonicity defect {max_defect:.3g} above repair_tol at step {bad_step}; reduce dt"
        )
    if code == 2:
        raise NumericsError(f"solver produced non-finite values at step {bad_step}")
    mass_defect = float(np.max(np.abs((out[:, -1] - out[:, 0]) - 1.0)))
    if mass_defect > options.mass_leak_tol:
        raise NumericsError(
            f"window mass drifted by {mass_defect:.3g}, beyond {options.mass_leak_tol:g}"
        )

    meta = {
        "scheme": options.scheme,
        "backend": backend_name(),
        "dt": grid.dt,
        "dx": grid.dx,
        "store_every": stride,
        "n_steps": n_steps,
        "max_monotone_defect": max_defect,
        "mass_defect": mass_defect,
        "convection_cfl": cfl,
        "upwind": options.upwind,
        "diffusivity_floored": floored,
        "tilted": tilt is not None,
    }
    return GridCdfPath(stored_idx * grid.dt, x, out, meta=meta)


def solve_forward(
    coeffs: RankCoefficients,
    init: InitialDistribution,
    grid: PdeGrid,
    options: SolverOptions | None = None,
) -> GridCdfPath:
    """March the base-dynamics CDF limit over the grid."""
    return _run_solver(coeffs, init, grid, options or SolverOptions(), None)


def solve_tilted(
    coeffs: RankCoefficients,
    init: InitialDistribution,
    tilt: TiltField,
    grid: PdeGrid,
    options: SolverOptions | None = None,
) -> GridCdfPath:
    """March the tilted CDF evolution (convection velocity -tilt times A)."""
    if tilt is None:
        raise ValueError("solve_tilted needs a tilt field; use solve_forward otherwise")
    return _run_solver(coeffs, init, grid, options or SolverOptions(), tilt)


# ---------------------------------------------------------------------------
# path diagnostics


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    """Integrability figures for a stored CDF path.

    Ratio integrands treat slope cells below the relative floor as zero
    and report the numerator mass that was excluded, so degeneracy is
    visible instead of silently divergent.
    """

    density_cubed: float
    curvature_ratio: float
    time_deriv_ratio: float
    tail_moment_sup: float
    lq_norms: dict
    floored_fraction: float
    floored_curvature_mass: float
    floored_time_deriv_mass: float
    eps_floor: float
    tail_exponent: float

    @property
    def finite(self) -> bool:
        vals = [
            self.density_cubed,
            self.curvature_ratio,
            self.time_deriv_ratio,
            self.tail_moment_sup,
        ] + [v for pair in self.lq_norms.values() for v in pair.values()]
        return all(math.isfinite(v) for v in vals)

    def to_json(self) -> str:
        payload = {
            "density_cubed": self.density_cubed,
            "curvature_ratio": self.curvature_ratio,
            "time_deriv_ratio": self.time_deriv_ratio,
            "tail_moment_sup": self.tail_moment_sup,
            "lq_norms": {str(q): v for q, v in sorted(self.lq_norms.items())},
            "floored_fraction": self.floored_fraction,
            "floored_curvature_mass": self.floored_curvature_mass,
            "floored_time_deriv_mass": self.floored_time_deriv_mass,
            "eps_floor": self.eps_floor,
            "tail_exponent": self.tail_exponent,
            "finite": self.finite,
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.zeros(nodes.size)
    d = np.diff(nodes)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def regularity_diagnostics(
    path: GridCdfPath,
    tail_exponent: float = 0.5,
    q_values: tuple = (1.2, 1.5),
    eps_floor: float = 1e-10,
) -> DiagnosticsReport:
    """Evaluate the standing integrability functionals on a stored path."""
    if path.t_grid.size < 3 or path.x_grid.size < 3:
        raise ValueError("diagnostics need at least three nodes per axis")
    R = path.values
    x = path.x_grid
    t = path.t_grid
    dx = np.diff(x)
    if np.max(dx) - np.min(dx) > 1e-9 * np.max(dx):
        raise ValueError("diagnostics expect a uniform space grid")
    h = float(dx[0])

    slope = np.gradient(R, x, axis=1)
    slope = np.maximum(slope, 0.0)
    curvature = np.empty_like(R)
    curvature[:, 1:-1] = (R[:, 2:] - 2.0 * R[:, 1:-1] + R[:, :-2]) / (h * h)
    curvature[:, 0] = curvature[:, 1]
    curvature[:, -1] = curvature[:, -2]
    time_deriv = np.gradient(R, t, axis=0)

    w = np.outer(_trapezoid_weights(t), _trapezoid_weights(x))
    floor = eps_floor * float(np.max(slope))
    mask = slope > floor

    density_cubed = float(np.sum(w * slope**3))
    with np.errstate(divide="ignore", invalid="ignore"):
        curv_ratio = np.where(mask, curvature**2 / np.where(mask, slope, 1.0), 0.0)
        td_ratio = np.where(mask, time_deriv**2 / np.where(mask, slope, 1.0), 0.0)
    curvature_ratio = float(np.sum(w * curv_ratio))
    time_deriv_ratio = float(np.sum(w * td_ratio))
    floored_curv = float(np.sum(w * np.where(mask, 0.0, curvature**2)))
    floored_td = float(np.sum(w * np.where(mask, 0.0, time_deriv**2)))
    floored_fraction = float(np.mean(~mask))

    wx = _trapezoid_weights(x)
    tail = np.abs(x) ** (1.0 + tail_exponent)
    tail_moment_sup = float(np.max(np.sum(wx * tail * slope, axis=1)))

    lq = {}
    for q in q_values:
        lq[float(q)] = {
            "time_deriv": float(np.sum(w * np.abs(time_deriv) ** q) ** (1.0 / q)),
            "curvature": float(np.sum(w * np.abs(curvature) ** q) ** (1.0 / q)),
        }

    return DiagnosticsReport(
        density_cubed=density_cubed,
        curvature_ratio=curvature_ratio,
        time_deriv_ratio=time_deriv_ratio,
        tail_moment_sup=tail_moment_sup,
        lq_norms=lq,
        floored_fraction=floored_fraction,
        floored_curvature_mass=floored_curv,
        floored_time_deriv_mass=floored_td,
        eps_floor=eps_floor,
        tail_exponent=tail_exponent,
    )
