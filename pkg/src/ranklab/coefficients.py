"""Rank-dependent coefficient tables and model-assumption validation.

The particle system assigns each particle a drift and a noise scale
through its rank fraction u in [0, 1]. Both coefficients are stored as
node tables on a common grid over [0, 1] and interpolated linearly in
between, so the diffusivity (half the squared noise scale) is piecewise
quadratic and its primitive can be integrated in closed form cell by
cell.

Assumption checks (Lipschitz bounds, tail integrability of the initial
law, moment bounds) are *reported*, not enforced: simulation entry
points accept any well-formed table, and `validate_assumptions` returns
a structured report a caller can inspect or fail on.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate as _sint
from scipy import stats as _sstats

from .errors import ConfigError

__all__ = [
    "RankCoefficients",
    "CoefficientValues",
    "CumulativeIntegral",
    "InitialDistribution",
    "AssumptionCheck",
    "ValidationReport",
    "coefficient_at",
    "antiderivatives",
    "validate_assumptions",
]

_CSV_HEADER = ["u", "b", "sigma"]


class CoefficientValues(NamedTuple):
    drift: np.ndarray | float
    sigma: np.ndarray | float
    diffusivity: np.ndarray | float
    diffusivity_slope: np.ndarray | float


@dataclass(frozen=True, eq=False)
class RankCoefficients:
    """Piecewise-linear drift and noise-scale tables over the rank axis.

    ``u_nodes`` must be strictly increasing with endpoints exactly 0 and
    1. ``sigma_nodes`` must be non-negative; a zero entry is accepted at
    construction (so the validator can report it) but rejected by any
    routine that divides by the noise scale.
    """

    u_nodes: np.ndarray
    drift_nodes: np.ndarray
    sigma_nodes: np.ndarray

    def __post_init__(self) -> None:
        u = np.asarray(self.u_nodes, dtype=float)
        b = np.asarray(self.drift_nodes, dtype=float)
        s = np.asarray(self.sigma_nodes, dtype=float)
        if u.ndim != 1 or u.size < 2:
            raise ConfigError("coefficient table needs at least two nodes on [0, 1]")
        if b.shape != u.shape or s.shape != u.shape:
            raise ConfigError(
                f"coefficient table shape mismatch: u{u.shape}, drift{b.shape}, sigma{s.shape}"
            )
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(b)) and np.all(np.isfinite(s))):
            raise ConfigError("coefficient tables must be finite")
        if u[0] != 0.0 or u[-1] != 1.0 or np.any(np.diff(u) <= 0):
            raise ConfigError("u nodes must increase strictly from 0.0 to 1.0")
        if np.any(s < 0):
            raise ConfigError("sigma nodes must be non-negative")
        object.__setattr__(self, "u_nodes", u)
        object.__setattr__(self, "drift_nodes", b)
        object.__setattr__(self, "sigma_nodes", s)

    # -- constructors ---------------------------------------------------

    @classmethod
    def constant(cls, drift: float, sigma: float) -> "RankCoefficients":
        return cls(np.array([0.0, 1.0]), np.array([drift, drift], float), np.array([sigma, sigma], float))

    @classmethod
    def from_tables(cls, u, drift, sigma) -> "RankCoefficients":
        return cls(np.asarray(u, float), np.asarray(drift, float), np.asarray(sigma, float))

    @classmethod
    def from_csv(cls, path) -> "RankCoefficients":
        try:
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header != _CSV_HEADER:
                    raise ConfigError(f"expected header {','.join(_CSV_HEADER)!r} in {path}")
                rows = [row for row in reader if row]
        except OSError as exc:
            raise ConfigError(f"cannot read coefficient table {path}: {exc}") from exc
        try:
            data = np.array([[float(v) for v in row] for row in rows], dtype=float)
        except ValueError as exc:
            raise ConfigError(f"non-numeric entry in coefficient table {path}: {exc}") from exc
        if data.ndim != 2 or data.shape[1] != 3:
            raise ConfigError(f"coefficient table {path} must have exactly 3 columns")
        return cls(data[:, 0], data[:, 1], data[:, 2])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_HEADER)
            for u, b, s in zip(self.u_nodes, self.drift_nodes, self.sigma_nodes):
                writer.writerow([repr(float(u)), repr(float(b)), repr(float(s))])

    # -- derived quantities ----------------------------------------------

    @property
    def diffusivity_nodes(self) -> np.ndarray:
        return 0.5 * self.sigma_nodes**2

    @property
    def drift_lipschitz(self) -> float:
        return float(np.max(np.abs(np.diff(self.drift_nodes) / np.diff(self.u_nodes))))

    @property
    def sigma_min(self) -> float:
        return float(np.min(self.sigma_nodes))

    def _cell_index(self, u: np.ndarray) -> np.ndarray:
        # right-continuous cell choice; the top node belongs to the last cell
        idx = np.searchsorted(self.u_nodes, u, side="right") - 1
        return np.clip(idx, 0, self.u_nodes.size - 2)


def coefficient_at(coeffs: RankCoefficients, u) -> CoefficientValues:
    """Evaluate drift, noise scale, diffusivity and its in-cell slope at ``u``.

    Accepts scalars or arrays; raises ValueError outside [0, 1]. The
    diffusivity slope uses the cell containing ``u`` (right-continuous at
    interior nodes), where the noise scale is linear and the slope of
    sigma^2/2 equals sigma times the cell slope of sigma.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0.0) or np.any(u_arr > 1.0) or not np.all(np.isfinite(u_arr)):
        raise ValueError("rank fraction must lie in [0, 1]")
    drift = np.interp(u_arr, coeffs.u_nodes, coeffs.drift_nodes)
    sigma = np.interp(u_arr, coeffs.u_nodes, coeffs.sigma_nodes)
    cell = coeffs._cell_index(u_arr)
    du = np.diff(coeffs.u_nodes)
    sigma_slope = np.diff(coeffs.sigma_nodes) / du
    diff_slope = sigma * sigma_slope[cell]
    diffusivity = 0.5 * sigma**2
    if np.isscalar(u) or u_arr.ndim == 0:
        return CoefficientValues(float(drift), float(sigma), float(diffusivity), float(diff_slope))
    return CoefficientValues(drift, sigma, diffusivity, diff_slope)


@dataclass(frozen=True, eq=False)
class CumulativeIntegral:
    """Exact running integral of a piecewise table from 0 to r in [0, 1].

    kind "linear" integrates the tabled function itself (linear per
    cell); kind "half_square" integrates half the square of the tabled
    function (quadratic per cell). Node values are precomputed so the
    in-cell remainder is the only arithmetic done per evaluation.
    """

    u_nodes: np.ndarray
    fn_nodes: np.ndarray
    values: np.ndarray
    kind: str

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0.0) or np.any(r_arr > 1.0) or not np.all(np.isfinite(r_arr)):
            raise ValueError("argument must lie in [0, 1]")
        idx = np.clip(np.searchsorted(self.u_nodes, r_arr, side="right") - 1, 0, self.u_nodes.size - 2)
        u0 = self.u_nodes[idx]
        tau = r_arr - u0
        f0 = self.fn_nodes[idx]
        slope = (self.fn_nodes[idx + 1] - f0) / (self.u_nodes[idx + 1] - u0)
        if self.kind == "linear":
            part = f0 * tau + 0.5 * slope * tau**2
        else:  # half_square
            part = 0.5 * (f0**2 * tau + f0 * slope * tau**2 + slope**2 * tau**3 / 3.0)
        out = self.values[idx] + part
        if np.isscalar(r) or r_arr.ndim == 0:
            return float(out)
        return out


def antiderivatives(coeffs: RankCoefficients) -> tuple[CumulativeIntegral, CumulativeIntegral]:
    """Return (diffusivity primitive, drift primitive) as exact tables.

    The first integrates sigma(u)^2 / 2 from 0, the second integrates the
    drift from 0, both in closed form per cell. The diffusivity primitive
    is strictly increasing whenever the noise scale is strictly positive.
    """
    u = coeffs.u_nodes
    du = np.diff(u)
    s0 = coeffs.sigma_nodes[:-1]
    s1 = coeffs.sigma_nodes[1:]
    q = (s1 - s0) / du
    # integral of (s0 + q t)^2 / 2 over one cell of width du
    diff_cells = 0.5 * (s0**2 * du + s0 * q * du**2 + q**2 * du**3 / 3.0)
    diff_values = np.concatenate([[0.0], np.cumsum(diff_cells)])
    b0 = coeffs.drift_nodes[:-1]
    b1 = coeffs.drift_nodes[1:]
    drift_cells = 0.5 * (b0 + b1) * du
    drift_values = np.concatenate([[0.0], np.cumsum(drift_cells)])
    return (
        CumulativeIntegral(u, coeffs.sigma_nodes.copy(), diff_values, "half_square"),
        CumulativeIntegral(u, coeffs.drift_nodes.copy(), drift_values, "linear"),
    )


# ---------------------------------------------------------------------------
# initial distributions


_FAMILIES = ("gaussian", "logistic", "uniform", "table")


@dataclass(frozen=True, eq=False)
class InitialDistribution:
    """Initial law of a single particle.

    gaussian / logistic: loc and scale in the usual parametrization.
    uniform: support [loc, loc + scale].
    table: piecewise-linear CDF through (table_x, table_cdf) nodes with
    strictly increasing CDF values running exactly from 0 to 1; density
    is piecewise constant.
    """

    family: str
    loc: float = 0.0
    scale: float = 1.0
    table_x: np.ndarray | None = None
    table_cdf: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ConfigError(f"unknown initial family {self.family!r}; expected one of {_FAMILIES}")
        if not (math.isfinite(self.loc) and math.isfinite(self.scale)) or self.scale <= 0:
            raise ConfigError("initial distribution needs finite loc and positive scale")
        if self.family == "table":
            if self.table_x is None or self.table_cdf is None:
                raise ConfigError("table family requires table_x and table_cdf nodes")
            x = np.asarray(self.table_x, dtype=float)
            F = np.asarray(self.table_cdf, dtype=float)
            if x.ndim != 1 or x.size < 2 or F.shape != x.shape:
                raise ConfigError("table nodes must be 1-d arrays of equal length >= 2")
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(F))):
                raise ConfigError("table nodes must be finite")
            if np.any(np.diff(x) <= 0):
                raise ConfigError("table_x must be strictly increasing")
            if abs(F[0]) > 1e-12 or abs(F[-1] - 1.0) > 1e-12 or np.any(np.diff(F) <= 0):
                raise ConfigError("table_cdf must increase strictly from 0 to 1")
            object.__setattr__(self, "table_x", x)
            object.__setattr__(self, "table_cdf", F)
        elif self.table_x is not None or self.table_cdf is not None:
            raise ConfigError(f"table nodes are only valid for the table family, not {self.family!r}")

    def _frozen(self):
        if self.family == "gaussian":
            return _sstats.norm(self.loc, self.scale)
        if self.family == "logistic":
            return _sstats.logistic(self.loc, self.scale)
        if self.family == "uniform":
            return _sstats.uniform(self.loc, self.scale)
        return None

    @property
    def smooth_density(self) -> bool:
        """True when the density is continuously differentiable on the line."""
        return self.family in ("gaussian", "logistic")

    def support(self) -> tuple[float, float]:
        if self.family in ("gaussian", "logistic"):
            return (-math.inf, math.inf)
        if self.family == "uniform":
            return (self.loc, self.loc + self.scale)
        return (float(self.table_x[0]), float(self.table_x[-1]))

    def cdf(self, x):
        x_arr = np.asarray(x, dtype=float)
        if self.family == "table":
            out = np.interp(x_arr, self.table_x, self.table_cdf, left=0.0, right=1.0)
        else:
            out = self._frozen().cdf(x_arr)
        return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out

    def density(self, x):
        x_arr = np.asarray(x, dtype=float)
        if self.family == "table":
            slopes = np.diff(self.table_cdf) / np.diff(self.table_x)
            idx = np.clip(np.searchsorted(self.table_x, x_arr, side="right") - 1, 0, slopes.size - 1)
            inside = (x_arr >= self.table_x[0]) & (x_arr <= self.table_x[-1])
            out = np.where(inside, slopes[idx], 0.0)
        else:
            out = self._frozen().pdf(x_arr)
        return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out

    def density_slope(self, x):
        """Pointwise derivative of the density; zero a.e. for the flat families."""
        x_arr = np.asarray(x, dtype=float)
        if self.family == "gaussian":
            z = (x_arr - self.loc) / self.scale
            out = -z / self.scale * self._frozen().pdf(x_arr)
        elif self.family == "logistic":
            F = self._frozen().cdf(x_arr)
            out = (1.0 - 2.0 * F) / self.scale * self._frozen().pdf(x_arr)
        else:
            out = np.zeros_like(x_arr)
        return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out

    def quantile(self, p):
        p_arr = np.asarray(p, dtype=float)
        if np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
            raise ValueError("quantile level must lie in [0, 1]")
        if self.family == "table":
            out = np.interp(p_arr, self.table_cdf, self.table_x)
        else:
            out = self._frozen().ppf(p_arr)
        return float(out) if np.isscalar(p) or p_arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# assumption validation


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    value: float
    passed: bool
    converged: bool
    detail: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value if math.isfinite(self.value) else repr(self.value),
            "passed": bool(self.passed),
            "converged": bool(self.converged),
            "detail": self.detail,
        }


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[AssumptionCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> str:
        payload = {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}
        return json.dumps(payload, sort_keys=True, indent=2)

    def summary(self) -> str:
        lines = [f"assumption checks: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            tag = "ok " if c.passed else "FAIL"
            lines.append(f"  [{tag}] {c.name} = {c.value:.6g} ({c.detail})")
        return "\n".join(lines)


def _doubling_integral(
    fn: Callable[[float], float],
    anchor: float,
    direction: int,
    rel_tol: float,
    max_doublings: int,
    breakpoints: np.ndarray | None = None,
) -> tuple[float, bool]:
    """Integrate fn over [anchor, inf) or (-inf, anchor] by window doubling.

    The window doubles until two successive values agree to rel_tol.
    Divergent integrands show up as a non-converged flag, not an error.
    """
    width = 1.0
    prev = None
    for _ in range(max_doublings):
        if direction > 0:
            a, b = anchor, anchor + width
        else:
            a, b = anchor - width, anchor
        pts = None
        if breakpoints is not None:
            inner = breakpoints[(breakpoints > a) & (breakpoints < b)]
            pts = inner if inner.size else None
        val, _ = _sint.quad(fn, a, b, limit=400, points=pts)
        if prev is not None and abs(val - prev) <= rel_tol * max(abs(val), 1e-300):
            return val, True
        if not math.isfinite(val):
            return val, False
        prev = val
        width *= 2.0
    return prev if prev is not None else math.nan, False


def _two_sided(fn, rel_tol, max_doublings, breakpoints):
    left, okl = _doubling_integral(fn, 0.0, -1, rel_tol, max_doublings, breakpoints)
    right, okr = _doubling_integral(fn, 0.0, +1, rel_tol, max_doublings, breakpoints)
    return left + right, okl and okr


def validate_assumptions(
    coeffs: RankCoefficients,
    init: InitialDistribution,
    tail_exponent: float = 0.5,
    rel_tol: float = 1e-6,
    max_doublings: int = 48,
) -> ValidationReport:
    """Check the standing model assumptions and report every result.

    Coefficient checks: strictly positive noise scale, finite Lipschitz
    estimates for the drift table and for the diffusivity slope.
    Initial-law checks: C1 density (structural), integrability of the
    cubed density, of the squared CDF tails against the density, of the
    squared density slope against the density, and finiteness of the
    first and (1 + tail_exponent) absolute moments. Ratio integrands use
    the 0/0 = 0 convention; positive numerator mass sitting on a
    zero-density region is flagged as a failure rather than dropped.
    """
    if not 0.0 < tail_exponent <= 4.0:
        raise ValueError("tail_exponent must lie in (0, 4]")
    checks: list[AssumptionCheck] = []

    smin = coeffs.sigma_min
    checks.append(
        AssumptionCheck(
            "sigma_strictly_positive",
            smin,
            smin > 0.0,
            True,
            "noise scale must be strictly positive at every node",
        )
    )
    blip = coeffs.drift_lipschitz
    checks.append(
        AssumptionCheck(
            "drift_lipschitz_finite",
            blip,
            math.isfinite(blip),
            True,
            "largest slope of the drift table",
        )
    )
    # slope of the diffusivity at cell midpoints, then the change between cells
    du = np.diff(coeffs.u_nodes)
    mid_slope = np.diff(coeffs.diffusivity_nodes) / du
    if mid_slope.size >= 2:
        mid_u = 0.5 * (coeffs.u_nodes[:-1] + coeffs.u_nodes[1:])
        dlip = float(np.max(np.abs(np.diff(mid_slope) / np.diff(mid_u))))
    else:
        dlip = 0.0
    checks.append(
        AssumptionCheck(
            "diffusivity_slope_lipschitz_finite",
            dlip,
            math.isfinite(dlip),
            True,
            "finite-difference Lipschitz estimate for the diffusivity slope",
        )
    )
    checks.append(
        AssumptionCheck(
            "initial_density_smooth",
            1.0 if init.smooth_density else 0.0,
            init.smooth_density,
            True,
            "density must be continuously differentiable on the line",
        )
    )

    breaks = init.table_x if init.family == "table" else None
    if init.family == "uniform":
        lo, hi = init.support()
        breaks = np.array([lo, hi])

    def density_cubed(x: float) -> float:
        return init.density(x) ** 3

    val, ok = _two_sided(density_cubed, rel_tol, max_doublings, breaks)
    checks.append(
        AssumptionCheck(
            "initial_density_cubed_integrable",
            val,
            ok and math.isfinite(val),
            ok,
            "integral of the cubed initial density",
        )
    )

    bad_mass = {"left": False, "right": False}

    def left_ratio(x: float) -> float:
        th = init.density(x)
        F = init.cdf(x)
        if th <= 0.0:
            if F > 1e-12:
                bad_mass["left"] = True
            return 0.0
        return F * F / th

    def right_ratio(x: float) -> float:
        th = init.density(x)
        G = 1.0 - init.cdf(x)
        if th <= 0.0:
            if G > 1e-12:
                bad_mass["right"] = True
            return 0.0
        return G * G / th

    val, ok = _doubling_integral(left_ratio, 0.0, -1, rel_tol, max_doublings, breaks)
    checks.append(
        AssumptionCheck(
            "left_tail_cdf_ratio_integrable",
            val,
            ok and math.isfinite(val) and not bad_mass["left"],
            ok,
            "squared CDF against the density over the left half-line"
            + ("; CDF mass found on a zero-density region" if bad_mass["left"] else ""),
        )
    )
    val, ok = _doubling_integral(right_ratio, 0.0, +1, rel_tol, max_doublings, breaks)
    checks.append(
        AssumptionCheck(
            "right_tail_cdf_ratio_integrable",
            val,
            ok and math.isfinite(val) and not bad_mass["right"],
            ok,
            "squared upper-CDF against the density over the right half-line"
            + ("; upper-CDF mass found on a zero-density region" if bad_mass["right"] else ""),
        )
    )

    def slope_ratio(x: float) -> float:
        th = init.density(x)
        if th <= 0.0:
            return 0.0
        ds = init.density_slope(x)
        return ds * ds / th

    val, ok = _two_sided(slope_ratio, rel_tol, max_doublings, breaks)
    checks.append(
        AssumptionCheck(
            "density_slope_ratio_integrable",
            val,
            ok and math.isfinite(val),
            ok,
            "squared density slope against the density",
        )
    )

    def abs_moment(x: float) -> float:
        return abs(x) * init.density(x)

    val, ok = _two_sided(abs_moment, rel_tol, max_doublings, breaks)
    checks.append(
        AssumptionCheck(
            "initial_abs_moment_finite",
            val,
            ok and math.isfinite(val),
            ok,
            "first absolute moment of the initial law",
        )
    )

    expo = 1.0 + tail_exponent

    def tail_moment(x: float) -> float:
        return abs(x) ** expo * init.density(x)

    val, ok = _two_sided(tail_moment, rel_tol, max_doublings, breaks)
    checks.append(
        AssumptionCheck(
            "initial_tail_moment_finite",
            val,
            ok and math.isfinite(val),
            ok,
            f"absolute moment of order {expo:g} of the initial law",
        )
    )

    return ValidationReport(tuple(checks))
