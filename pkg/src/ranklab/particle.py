"""Interacting particle cloud: stepping, tilting, and weight accounting.

Each particle feels drift and noise through its rank fraction (1-based
rank over count, ties resolved by input order). The single-step
functions here are the pure-numpy reference semantics; `simulate_path`
drives whole trajectories through the compiled backend blocks, which
must match the reference step for step.

Tilted dynamics replace the rank drift with minus half the tilt times
the squared noise scale. The accumulator tracks the two sums behind the
change-of-measure weight: a martingale part (drift gap times the step's
own noise) and its quadratic variation. Simulating the tilted system
and averaging exp(martingale - quadratic/2) times an indicator
reproduces base-measure probabilities exactly at the discrete level,
for any step size.
"""
from __future__ import annotations

import math
import csv
from dataclasses import dataclass

import numpy as np

from .backends import get_backend, numpy_backend
from .coefficients import RankCoefficients
from .errors import ConfigError, NumericsError
from .measures import EmpiricalCdf, quantile_init
from .rng import replica_rng

__all__ = [
    "TiltField",
    "ParticleEnsemble",
    "GirsanovAccumulator",
    "SimConfig",
    "SimulationResult",
    "rank_fractions",
    "em_step",
    "tilted_em_step",
    "girsanov_update",
    "simulate_path",
    "pathwise_cost",
]

_CHUNK_STEPS = 256


def rank_fractions(positions: np.ndarray) -> np.ndarray:
    """Rank fraction of every particle: sorted position (1-based) over count."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 1 or pos.size == 0:
        raise ValueError("positions must be a non-empty 1-d array")
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions must be finite")
    return numpy_backend.rank_u(pos)


@dataclass(frozen=True, eq=False)
class TiltField:
    """Bounded tilt h(t, x) on a rectangular grid, bilinear inside.

    Outside the grid the nearest value extends constantly in each
    coordinate; keep the grid covering the region you simulate on.
    """

    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray
    declared_bound: float | None = None

    def __post_init__(self) -> None:
        t = np.asarray(self.t_grid, dtype=float)
        x = np.asarray(self.x_grid, dtype=float)
        h = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or x.ndim != 1 or t.size < 2 or x.size < 2:
            raise ConfigError("tilt field needs at least a 2 x 2 grid")
        if h.shape != (t.size, x.size):
            raise ConfigError(f"tilt values {h.shape} do not match grid ({t.size}, {x.size})")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(x) <= 0):
            raise ConfigError("tilt grids must be strictly increasing")
        if not np.all(np.isfinite(h)):
            raise ConfigError("tilt values must be finite")
        if self.declared_bound is not None and np.max(np.abs(h)) > self.declared_bound + 1e-12:
            raise ConfigError(
                f"tilt values exceed the declared bound {self.declared_bound:g}"
            )
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "values", np.ascontiguousarray(h))

    @classmethod
    def constant(cls, value: float, t_span=(0.0, 1.0), x_span=(-1.0, 1.0)) -> "TiltField":
        t = np.array([t_span[0], t_span[1]], dtype=float)
        x = np.array([x_span[0], x_span[1]], dtype=float)
        return cls(t, x, np.full((2, 2), float(value)))

    @classmethod
    def from_callable(cls, fn, t_grid, x_grid) -> "TiltField":
        t = np.asarray(t_grid, dtype=float)
        x = np.asarray(x_grid, dtype=float)
        vals = np.array([[float(fn(tv, xv)) for xv in x] for tv in t])
        return cls(t, x, vals)

    @property
    def h_max(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def lipschitz_x(self) -> float:
        if self.x_grid.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.values, axis=1) / np.diff(self.x_grid))))

    @property
    def lipschitz_t(self) -> float:
        if self.t_grid.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.values, axis=0) / np.diff(self.t_grid)[:, None])))

    def covers(self, t0: float, t1: float, x0: float, x1: float) -> bool:
        return (
            self.t_grid[0] <= t0 + 1e-12
            and self.t_grid[-1] >= t1 - 1e-12
            and self.x_grid[0] <= x0 + 1e-12
            and self.x_grid[-1] >= x1 - 1e-12
        )

    def eval(self, t: float, x) -> np.ndarray:
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = numpy_backend.tilt_at(self.t_grid, self.x_grid, self.values, float(t), x_arr)
        if np.isscalar(x) or np.asarray(x).ndim == 0:
            return float(out[0])
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "h"])
            for k, t in enumerate(self.t_grid):
                ts = repr(float(t))
                for j, x in enumerate(self.x_grid):
                    writer.writerow([ts, repr(float(x)), repr(float(self.values[k, j]))])

    @classmethod
    def from_csv(cls, path) -> "TiltField":
        try:
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header != ["t", "x", "h"]:
                    raise ConfigError(f"expected header 't,x,h' in {path}")
                rows = [row for row in reader if row]
            data = np.array([[float(v) for v in row] for row in rows], dtype=float)
        except OSError as exc:
            raise ConfigError(f"cannot read tilt table {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"non-numeric entry in tilt table {path}: {exc}") from exc
        if data.ndim != 2 or data.shape[1] != 3:
            raise ConfigError(f"tilt table {path} must have exactly 3 columns")
        t = np.unique(data[:, 0])
        x = np.unique(data[:, 1])
        if data.shape[0] != t.size * x.size:
            raise ConfigError(f"tilt table {path} does not cover a full t-x grid")
        return cls(t, x, data[:, 2].reshape(t.size, x.size))


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Particle positions at one instant; replica tags the noise stream."""

    positions: np.ndarray
    t: float = 0.0
    replica: int = 0

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size == 0:
            raise ValueError("ensemble needs a non-empty 1-d position array")
        if not np.all(np.isfinite(pos)):
            raise ValueError("ensemble positions must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.size

    def to_empirical(self) -> EmpiricalCdf:
        return EmpiricalCdf(self.positions.copy(), t=self.t)


@dataclass(frozen=True)
class GirsanovAccumulator:
    """Running change-of-measure sums along one tilted trajectory."""

    martingale: float = 0.0
    quadratic: float = 0.0
    steps: int = 0

    @classmethod
    def zero(cls) -> "GirsanovAccumulator":
        return cls(0.0, 0.0, 0)

    def importance_weight(self) -> float:
        """Weight that converts tilted-run averages into base-measure ones."""
        return math.exp(self.martingale - 0.5 * self.quadratic)


@dataclass(frozen=True)
class SimConfig:
    """Particle-run parameters; snapshot times must sit on the step grid."""

    n_particles: int
    dt: float
    final_time: float
    snapshot_times: tuple = ()
    seed: int = 0
    stream_key: tuple = ()

    def __post_init__(self) -> None:
        if self.n_particles < 1:
            raise ConfigError("n_particles must be positive")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive and finite")
        if not (self.final_time > 0 and math.isfinite(self.final_time)):
            raise ConfigError("final_time must be positive and finite")
        steps = self.final_time / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError("final_time must be an integer number of steps")
        times = sorted(set(float(t) for t in self.snapshot_times) | {0.0})
        for t in times:
            if t < 0 or t > self.final_time + 1e-12:
                raise ConfigError(f"snapshot time {t} outside [0, final_time]")
            k = t / self.dt
            if abs(k - round(k)) > 1e-9 * max(1.0, k):
                raise ConfigError(f"snapshot time {t} does not sit on the step grid")
        object.__setattr__(self, "snapshot_times", tuple(times))

    @property
    def n_steps(self) -> int:
        return int(round(self.final_time / self.dt))

    def snapshot_indices(self) -> list:
        return [int(round(t / self.dt)) for t in self.snapshot_times]


@dataclass(frozen=True, eq=False)
class SimulationResult:
    snapshots: list
    accumulator: GirsanovAccumulator
    final: ParticleEnsemble
    config: SimConfig


def _tables(coeffs: RankCoefficients):
    return coeffs.u_nodes, coeffs.drift_nodes, coeffs.sigma_nodes


def em_step(ens: ParticleEnsemble, coeffs: RankCoefficients, dt: float, noise: np.ndarray) -> ParticleEnsemble:
    """One base-dynamics step; reference semantics for the backends."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape != ens.positions.shape:
        raise ValueError("noise must match the ensemble shape")
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = rank_fractions(ens.positions)
    un, dn, sn = _tables(coeffs)
    b = np.interp(u, un, dn)
    s = np.interp(u, un, sn)
    new = ens.positions + b * dt + s * (math.sqrt(dt) * noise)
    if not np.all(np.isfinite(new)):
        raise NumericsError(f"particle blow-up at t={ens.t + dt:g} (replica {ens.replica})")
    return ParticleEnsemble(new, ens.t + dt, ens.replica)


def tilted_em_step(
    ens: ParticleEnsemble, coeffs: RankCoefficients, tilt: TiltField, dt: float, noise: np.ndarray
) -> ParticleEnsemble:
    """One tilted-dynamics step: drift is minus half tilt times squared noise scale."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape != ens.positions.shape:
        raise ValueError("noise must match the ensemble shape")
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = rank_fractions(ens.positions)
    un, dn, sn = _tables(coeffs)
    s = np.interp(u, un, sn)
    h = tilt.eval(ens.t, ens.positions)
    new = ens.positions - 0.5 * h * s * s * dt + s * (math.sqrt(dt) * noise)
    if not np.all(np.isfinite(new)):
        raise NumericsError(f"particle blow-up at t={ens.t + dt:g} (replica {ens.replica})")
    return ParticleEnsemble(new, ens.t + dt, ens.replica)


def girsanov_update(
    acc: GirsanovAccumulator,
    ens: ParticleEnsemble,
    coeffs: RankCoefficients,
    tilt: TiltField,
    dt: float,
    noise: np.ndarray,
) -> GirsanovAccumulator:
    """Extend the weight sums using the pre-step state and the step's noise.

    Call this with exactly the noise that then advances the ensemble;
    using fresh noise here breaks the exact discrete identity.
    """
    if coeffs.sigma_min <= 0.0:
        raise ConfigError("change-of-measure accounting needs a strictly positive noise scale")
    noise = np.asarray(noise, dtype=float)
    if noise.shape != ens.positions.shape:
        raise ValueError("noise must match the ensemble shape")
    u = rank_fractions(ens.positions)
    un, dn, sn = _tables(coeffs)
    b = np.interp(u, un, dn)
    s = np.interp(u, un, sn)
    h = tilt.eval(ens.t, ens.positions)
    g = 0.5 * h * s + b / s
    return GirsanovAccumulator(
        acc.martingale + math.sqrt(dt) * float(g @ noise),
        acc.quadratic + dt * float(g @ g),
        acc.steps + 1,
    )


def pathwise_cost(acc: GirsanovAccumulator, n_particles: int) -> float:
    """Half the quadratic sum per particle; the tilt's running price."""
    if n_particles < 1:
        raise ValueError("n_particles must be positive")
    return 0.5 * acc.quadratic / n_particles


def simulate_path(
    coeffs: RankCoefficients,
    init,
    config: SimConfig,
    tilt: TiltField | None = None,
) -> SimulationResult:
    """Run one replica from the deterministic quantile start to final_time.

    Snapshots are emitted at the configured times (always including 0)
    in time order; the run always continues to final_time so the weight
    sums cover the whole window. The noise stream is fixed by
    (config.seed, config.stream_key) alone.
    """
    if tilt is not None and coeffs.sigma_min <= 0.0:
        raise ConfigError("tilted runs need a strictly positive noise scale")
    backend = get_backend()
    un, dn, sn = _tables(coeffs)
    rng = replica_rng(config.seed, *config.stream_key)
    start = quantile_init(init, config.n_particles)
    pos = start.positions.copy()
    n = config.n_particles
    dt = config.dt
    snaps = [EmpiricalCdf(pos.copy(), t=0.0)]
    martingale = 0.0
    quadratic = 0.0
    k = 0
    snap_time_by_index = dict(zip(config.snapshot_indices(), config.snapshot_times))
    targets = sorted(set(snap_time_by_index) | {config.n_steps})
    for k_target in targets:
        if k_target == 0:
            continue
        while k < k_target:
            m = min(_CHUNK_STEPS, k_target - k)
            noise = rng.standard_normal((m, n))
            if tilt is None:
                pos = backend.em_block(pos, noise, dt, k, un, dn, sn)
            else:
                pos, m_inc, a_inc = backend.tilted_em_block(
                    pos, noise, dt, k, un, dn, sn, tilt.t_grid, tilt.x_grid, tilt.values
                )
                martingale += m_inc
                quadratic += a_inc
            k += m
            if not np.all(np.isfinite(pos)):
                raise NumericsError(
                    f"particle blow-up near t={k * dt:g} (stream {config.stream_key})"
                )
        if k_target in snap_time_by_index:
            snaps.append(EmpiricalCdf(pos.copy(), t=snap_time_by_index[k_target]))
    steps_done = config.n_steps if tilt is not None else 0
    acc = GirsanovAccumulator(martingale, quadratic, steps_done)
    replica = config.stream_key[-1] if config.stream_key else 0
    final = ParticleEnsemble(pos, t=config.final_time, replica=int(replica))
    return SimulationResult(snaps, acc, final, config)
