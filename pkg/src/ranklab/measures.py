"""Distribution-function containers and metrics between laws on the line.

Two CDF representations are used throughout: sorted particle clouds
(step CDFs, right-continuous) and grid paths (piecewise-linear CDF
slices stacked over a time grid). The metrics accept either kind.

The Levy distance is computed by bisection on epsilon: the sandwich
predicate "F(x - eps) - eps <= G(x) <= F(x + eps) + eps for all x" is
monotone in eps, and for piecewise-constant or piecewise-linear CDFs
each one-sided check is an exact finite maximum over the merged
breakpoints (evaluated from both sides). The bounded-Lipschitz distance
solves the exact finite LP over atomic measures; grid slices are
discretized to cell-mass atoms first, an O(dx) approximation noted in
`bounded_lipschitz_distance`.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as _sopt
from scipy import sparse as _ssparse

from .coefficients import InitialDistribution
from .errors import ConfigError, NumericsError

__all__ = [
    "EmpiricalCdf",
    "GridCdf",
    "GridCdfPath",
    "MeasurePathDistance",
    "quantile_init",
    "empirical_cdf_eval",
    "levy_distance",
    "ks_distance",
    "bounded_lipschitz_distance",
    "path_distance",
    "ball_contains",
    "write_empirical_path_csv",
    "read_empirical_path_csv",
]


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    """Step CDF of a finite particle cloud at one instant.

    Positions are stored sorted; evaluation is right-continuous with
    mass 1/n per particle (ties stack).
    """

    positions: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size == 0:
            raise ValueError("empirical CDF needs a non-empty 1-d position array")
        if not np.all(np.isfinite(pos)):
            raise ValueError("empirical CDF positions must be finite")
        if np.any(np.diff(pos) < 0):
            pos = np.sort(pos, kind="stable")
        if not math.isfinite(self.t):
            raise ValueError("snapshot time must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.size

    def breakpoints(self) -> np.ndarray:
        return np.unique(self.positions)

    def eval(self, x) -> np.ndarray:
        return np.searchsorted(self.positions, np.asarray(x, float), side="right") / self.n

    def eval_left(self, x) -> np.ndarray:
        return np.searchsorted(self.positions, np.asarray(x, float), side="left") / self.n


def empirical_cdf_eval(positions: np.ndarray, x) -> np.ndarray:
    """Right-continuous empirical CDF of ``positions`` evaluated at ``x``."""
    return EmpiricalCdf(positions).eval(x)


def quantile_init(init: InitialDistribution, n: int) -> EmpiricalCdf:
    """Deterministic n-particle start: quantiles at levels (i + 1/2)/n."""
    if n < 1:
        raise ValueError("particle count must be positive")
    levels = (np.arange(n) + 0.5) / n
    pos = np.asarray(init.quantile(levels), dtype=float)
    if not np.all(np.isfinite(pos)):
        raise ConfigError("initial quantiles are not finite; check the distribution table")
    return EmpiricalCdf(pos, t=0.0)


@dataclass(frozen=True, eq=False)
class GridCdf:
    """Piecewise-linear CDF slice on a node grid, constant outside."""

    x_nodes: np.ndarray
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        x = np.asarray(self.x_nodes, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.size < 2 or v.shape != x.shape:
            raise ValueError("grid CDF needs matching 1-d node and value arrays (>= 2 nodes)")
        if np.any(np.diff(x) <= 0):
            raise ValueError("grid CDF nodes must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("grid CDF data must be finite")
        object.__setattr__(self, "x_nodes", x)
        object.__setattr__(self, "values", v)

    def breakpoints(self) -> np.ndarray:
        return self.x_nodes

    def eval(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, float), self.x_nodes, self.values)

    eval_left = eval  # continuous


@dataclass(frozen=True, eq=False)
class GridCdfPath:
    """CDF slices stacked over a time grid, row ``k`` at time ``t_grid[k]``.

    ``meta`` carries run descriptors (scheme, step sizes, repairs); it is
    excluded from equality and from the serialized table.
    """

    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        t = np.asarray(self.t_grid, dtype=float)
        x = np.asarray(self.x_grid, dtype=float)
        R = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or x.ndim != 1 or R.shape != (t.size, x.size):
            raise ValueError(
                f"path shape mismatch: values {R.shape} vs (t {t.size}, x {x.size})"
            )
        if t.size < 1 or x.size < 2:
            raise ValueError("path needs at least one time slice and two space nodes")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(x) <= 0):
            raise ValueError("time and space grids must be strictly increasing")
        if not np.all(np.isfinite(R)):
            raise NumericsError("path contains non-finite values")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "values", R)

    @property
    def t_final(self) -> float:
        return float(self.t_grid[-1])

    def slice(self, k: int) -> GridCdf:
        return GridCdf(self.x_grid, self.values[k], t=float(self.t_grid[k]))

    def at_time(self, t: float) -> GridCdf:
        """Slice at time t, linear in t between stored slices."""
        t0, t1 = self.t_grid[0], self.t_grid[-1]
        if t < t0 - 1e-9 or t > t1 + 1e-9:
            raise ValueError(f"time {t} outside stored range [{t0}, {t1}]")
        tc = min(max(t, t0), t1)
        k = int(np.clip(np.searchsorted(self.t_grid, tc, side="right") - 1, 0, self.t_grid.size - 2))
        if self.t_grid.size == 1:
            return self.slice(0)
        w = (tc - self.t_grid[k]) / (self.t_grid[k + 1] - self.t_grid[k])
        vals = (1.0 - w) * self.values[k] + w * self.values[k + 1]
        return GridCdf(self.x_grid, vals, t=float(tc))

    def invariants_report(self, eps_bc: float = 1e-8, monotone_tol: float = 1e-10) -> dict:
        R = self.values
        defect = float(np.max(np.maximum(0.0, -np.diff(R, axis=1)))) if R.shape[1] > 1 else 0.0
        jumps = np.max(np.abs(np.diff(R, axis=0))) if R.shape[0] > 1 else 0.0
        report = {
            "min_value": float(np.min(R)),
            "max_value": float(np.max(R)),
            "value_range_ok": bool(np.min(R) >= -eps_bc and np.max(R) <= 1.0 + eps_bc),
            "monotone_defect": defect,
            "monotone_ok": bool(defect <= monotone_tol),
            "left_boundary_max": float(np.max(np.abs(R[:, 0]))),
            "right_boundary_max_dev": float(np.max(np.abs(R[:, -1] - 1.0))),
            "time_continuity_max_jump": float(jumps),
        }
        report["boundary_ok"] = bool(
            report["left_boundary_max"] <= eps_bc and report["right_boundary_max_dev"] <= eps_bc
        )
        return report

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "R"])
            for k, t in enumerate(self.t_grid):
                ts = repr(float(t))
                for j, x in enumerate(self.x_grid):
                    writer.writerow([ts, repr(float(x)), repr(float(self.values[k, j]))])

    @classmethod
    def from_csv(cls, path) -> "GridCdfPath":
        try:
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header != ["t", "x", "R"]:
                    raise ConfigError(f"expected header 't,x,R' in {path}")
                rows = [row for row in reader if row]
        except OSError as exc:
            raise ConfigError(f"cannot read path table {path}: {exc}") from exc
        try:
            data = np.array([[float(v) for v in row] for row in rows], dtype=float)
        except ValueError as exc:
            raise ConfigError(f"non-numeric entry in path table {path}: {exc}") from exc
        if data.ndim != 2 or data.shape[1] != 3:
            raise ConfigError(f"path table {path} must have exactly 3 columns")
        t = np.unique(data[:, 0])
        x = np.unique(data[:, 1])
        if data.shape[0] != t.size * x.size:
            raise ConfigError(f"path table {path} does not cover a full t-x grid")
        expect_t = np.repeat(t, x.size)
        expect_x = np.tile(x, t.size)
        if not (np.array_equal(data[:, 0], expect_t) and np.array_equal(data[:, 1], expect_x)):
            raise ConfigError(f"path table {path} rows must be row-major in t then x")
        return cls(t, x, data[:, 2].reshape(t.size, x.size))


# ---------------------------------------------------------------------------
# empirical path serialization


def write_empirical_path_csv(snapshots, path) -> None:
    """Write snapshots as rows ``t,rank,x`` with ranks starting at 1."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "rank", "x"])
        for snap in snapshots:
            ts = repr(float(snap.t))
            for rank, x in enumerate(snap.positions, start=1):
                writer.writerow([ts, rank, repr(float(x))])


def read_empirical_path_csv(path) -> list[EmpiricalCdf]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["t", "rank", "x"]:
                raise ConfigError(f"expected header 't,rank,x' in {path}")
            rows = [row for row in reader if row]
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot table {path}: {exc}") from exc
    snaps: list[EmpiricalCdf] = []
    cur_t: float | None = None
    cur: list[float] = []
    for row in rows:
        try:
            t, x = float(row[0]), float(row[2])
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"bad row in snapshot table {path}: {row!r}") from exc
        if cur_t is None or t != cur_t:
            if cur:
                snaps.append(EmpiricalCdf(np.array(cur), t=cur_t))
            cur_t, cur = t, []
        cur.append(x)
    if cur:
        snaps.append(EmpiricalCdf(np.array(cur), t=cur_t))
    return snaps


# ---------------------------------------------------------------------------
# metrics


def _one_sided_excess(a, b, eps: float) -> float:
    """sup_x [a(x) - b(x + eps)] over the line, exact for step/linear CDFs."""
    cands = np.union1d(a.breakpoints(), b.breakpoints() - eps)
    right = a.eval(cands) - b.eval(cands + eps)
    left = a.eval_left(cands) - b.eval_left(cands + eps)
    return float(max(np.max(right), np.max(left)))


def _sandwich_ok(f, g, eps: float) -> bool:
    return _one_sided_excess(g, f, eps) <= eps and _one_sided_excess(f, g, eps) <= eps


def levy_distance(f, g, tol: float = 1e-6) -> float:
    """Levy distance between two CDFs, certified within ``tol``.

    Returns the smallest epsilon found for which the sandwich holds;
    bisection narrows the bracket to tol/4 so the result sits within
    tol/4 above the exact value.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if _sandwich_ok(f, g, 0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol / 4.0:
        mid = 0.5 * (lo + hi)
        if _sandwich_ok(f, g, mid):
            hi = mid
        else:
            lo = mid
    return hi


def ks_distance(f, g) -> float:
    """Uniform distance between two CDFs, exact on the merged breakpoints."""
    cands = np.union1d(f.breakpoints(), g.breakpoints())
    right = np.abs(f.eval(cands) - g.eval(cands))
    left = np.abs(f.eval_left(cands) - g.eval_left(cands))
    return float(max(np.max(right), np.max(left)))


def _atoms(obj) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(obj, EmpiricalCdf):
        xs, counts = np.unique(obj.positions, return_counts=True)
        return xs, counts / obj.n
    if isinstance(obj, GridCdf):
        v = np.clip(obj.values, 0.0, 1.0)
        v = np.maximum.accumulate(v)
        cell_mass = np.diff(v)
        mids = 0.5 * (obj.x_nodes[:-1] + obj.x_nodes[1:])
        left_over = float(v[0])
        right_over = float(1.0 - v[-1])
        if max(left_over, right_over) > 1e-6:
            warnings.warn(
                f"grid CDF carries mass beyond its window (left {left_over:.3g}, "
                f"right {right_over:.3g}); it is assigned to the window edges",
                stacklevel=3,
            )
        xs = np.concatenate([[obj.x_nodes[0]], mids, [obj.x_nodes[-1]]])
        ws = np.concatenate([[left_over], cell_mass, [right_over]])
        keep = ws > 0
        return xs[keep], ws[keep]
    raise TypeError(f"cannot atomize {type(obj).__name__}")


def bounded_lipschitz_distance(f, g) -> float:
    """Bounded-Lipschitz distance sup{ integral of f d(mu - nu) }.

    The supremum runs over test functions with sup-norm plus Lipschitz
    constant at most 1 and is attained on piecewise-linear functions, so
    for atomic measures it is the exact value of a small LP (HiGHS).
    Grid slices are reduced to cell-mass atoms at cell midpoints first;
    that step is an O(dx) approximation of the underlying slice.
    """
    xf, wf = _atoms(f)
    xg, wg = _atoms(g)
    x_all = np.concatenate([xf, xg])
    d_all = np.concatenate([wf, -wg])
    xs, inv = np.unique(x_all, return_inverse=True)
    d = np.zeros(xs.size)
    np.add.at(d, inv, d_all)
    n = xs.size
    if n == 1:
        return 0.0
    gaps = np.diff(xs)
    # variables: values v_0..v_{n-1}, bound m, slope l
    rows = []
    eye = _ssparse.identity(n, format="csr")
    neg_m = _ssparse.csr_matrix((np.full(n, -1.0), (np.arange(n), np.zeros(n, int))), shape=(n, 1))
    rows.append(_ssparse.hstack([eye, neg_m, _ssparse.csr_matrix((n, 1))], format="csr"))
    rows.append(_ssparse.hstack([-eye, neg_m, _ssparse.csr_matrix((n, 1))], format="csr"))
    diff = _ssparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")
    neg_l = _ssparse.csr_matrix((-gaps, (np.arange(n - 1), np.zeros(n - 1, int))), shape=(n - 1, 1))
    rows.append(_ssparse.hstack([diff, _ssparse.csr_matrix((n - 1, 1)), neg_l], format="csr"))
    rows.append(_ssparse.hstack([-diff, _ssparse.csr_matrix((n - 1, 1)), neg_l], format="csr"))
    budget = _ssparse.csr_matrix((np.ones(2), (np.zeros(2, int), [n, n + 1])), shape=(1, n + 2))
    a_ub = _ssparse.vstack(rows + [budget], format="csr")
    b_ub = np.zeros(a_ub.shape[0])
    b_ub[-1] = 1.0
    c = np.concatenate([-d, [0.0, 0.0]])
    bounds = [(None, None)] * n + [(0.0, None), (0.0, None)]
    res = _sopt.linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        raise NumericsError(f"bounded-Lipschitz LP failed: {res.message}")
    return float(-res.fun)


# ---------------------------------------------------------------------------
# path distance


@dataclass(frozen=True, eq=False)
class MeasurePathDistance:
    """Supremum over compared times of the slice Levy distance."""

    sup_distance: float
    argmax_time: float
    times: np.ndarray
    distances: np.ndarray


def _comparison_times(a, b) -> np.ndarray:
    a_grid = isinstance(a, GridCdfPath)
    b_grid = isinstance(b, GridCdfPath)
    if a_grid and b_grid:
        lo = max(a.t_grid[0], b.t_grid[0])
        hi = min(a.t_grid[-1], b.t_grid[-1])
        if lo > hi + 1e-12:
            raise ValueError("paths do not overlap in time")
        nodes = np.union1d(a.t_grid, b.t_grid)
        return nodes[(nodes >= lo - 1e-12) & (nodes <= hi + 1e-12)]
    if a_grid or b_grid:
        grid, emp = (a, b) if a_grid else (b, a)
        times = np.array([s.t for s in emp])
        if times.size == 0:
            raise ValueError("empirical path has no snapshots")
        if times.min() < grid.t_grid[0] - 1e-9 or times.max() > grid.t_grid[-1] + 1e-9:
            raise ValueError("empirical snapshot times leave the stored grid range")
        return times
    ta = np.array([s.t for s in a])
    tb = np.array([s.t for s in b])
    times = np.intersect1d(ta, tb)
    if times.size == 0:
        raise ValueError("empirical paths share no snapshot times")
    return times


def _slice_at(path, t: float):
    if isinstance(path, GridCdfPath):
        return path.at_time(t)
    for snap in path:
        if abs(snap.t - t) <= 1e-12:
            return snap
    raise ValueError(f"no snapshot at time {t}")


def path_distance(a, b, tol: float = 1e-6) -> MeasurePathDistance:
    """sup over shared comparison times of the slice Levy distance.

    Grid paths interpolate linearly between stored slices; empirical
    paths contribute their own snapshot times. See the module docstring
    for which time set each pairing uses.
    """
    times = _comparison_times(a, b)
    dists = np.array([levy_distance(_slice_at(a, t), _slice_at(b, t), tol=tol) for t in times])
    k = int(np.argmax(dists))
    return MeasurePathDistance(float(dists[k]), float(times[k]), times, dists)


def ball_contains(center, delta: float, sample, tol: float = 1e-6) -> tuple[bool, MeasurePathDistance]:
    """Strict containment of ``sample`` in the radius-``delta`` ball at ``center``."""
    if delta <= 0:
        raise ValueError("ball radius must be positive")
    dist = path_distance(center, sample, tol=tol)
    return dist.sup_distance < delta, dist
