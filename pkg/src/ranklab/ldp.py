"""Monte-Carlo probes tying particle clouds to the limit path and its action.

Three experiments live here. The law-of-large-numbers probe measures how
fast untilted clouds of growing size collapse onto the forward-solver
path. The tilted probe prices the steering cost (half the quadratic sum
per particle) against the action of the tilted limit path, and estimates
the probability that an untilted cloud lands in a metric ball around
that path, two ways: naively by counting hits, and by importance
sampling with the change-of-measure weight accumulated along tilted
runs. Replicas draw from disjoint, splittable noise streams keyed by
(experiment tag, particle count, replica), so reports are byte-stable
for a given seed regardless of worker count.
"""
from __future__ import annotations

import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coefficients import InitialDistribution, RankCoefficients
from .measures import GridCdfPath, path_distance
from .particle import SimConfig, SimulationResult, TiltField, pathwise_cost, simulate_path
from .pde import PdeGrid, SolverOptions, solve_forward, solve_tilted
from .rate import rate_functional

__all__ = [
    "BallEstimate",
    "LlnEntry",
    "LlnReport",
    "LdpEntry",
    "LdpReport",
    "estimate_ball_probability",
    "run_lln",
    "run_ldp",
]

# stream tags keep the three experiment families on disjoint noise
_LLN_STREAM = 1
_TILTED_STREAM = 2
_NAIVE_STREAM = 3


def _grid_descriptor(path: GridCdfPath) -> dict:
    return {
        "nt": int(path.t_grid.size),
        "nx": int(path.x_grid.size),
        "t_final": float(path.t_grid[-1]),
        "x_min": float(path.x_grid[0]),
        "x_max": float(path.x_grid[-1]),
    }


def _fan_out(jobs, fn, workers: int):
    if workers <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# LLN probe


@dataclass(frozen=True)
class LlnEntry:
    n: int
    replicas: int
    median_distance: float
    max_distance: float
    distances: tuple

    def to_dict(self) -> dict:
        return {
            "N": self.n,
            "replicas": self.replicas,
            "median_sup_distance": self.median_distance,
            "max_sup_distance": self.max_distance,
            "distances": list(self.distances),
        }


@dataclass(frozen=True, eq=False)
class LlnReport:
    target: GridCdfPath
    entries: tuple
    seed: int
    sim_dt: float
    snapshot_times: tuple

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "sim_dt": self.sim_dt,
            "snapshot_times": list(self.snapshot_times),
            "target": _grid_descriptor(self.target),
            "entries": [e.to_dict() for e in self.entries],
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def write_distance_csv(self, fileobj) -> None:
        fileobj.write("N,replica,distance\n")
        for entry in self.entries:
            for r, d in enumerate(entry.distances):
                fileobj.write(f"{entry.n},{r},{float(d)!r}\n")


def run_lln(
    coeffs: RankCoefficients,
    init: InitialDistribution,
    grid: PdeGrid,
    n_list,
    replicas: int,
    sim_dt: float,
    snapshot_times,
    solver_options: SolverOptions | None = None,
    seed: int = 0,
    workers: int = 1,
    tol: float = 1e-6,
) -> LlnReport:
    """Distance of untilted clouds to the forward limit, per size and replica."""
    if replicas < 1:
        raise ValueError("replicas must be positive")
    target = solve_forward(coeffs, init, grid, solver_options)
    snapshot_times = tuple(float(t) for t in snapshot_times)

    def one(job):
        n, replica = job
        cfg = SimConfig(
            n_particles=n,
            dt=sim_dt,
            final_time=grid.final_time,
            snapshot_times=snapshot_times,
            seed=seed,
            stream_key=(_LLN_STREAM, n, replica),
        )
        result = simulate_path(coeffs, init, cfg)
        return path_distance(target, result.snapshots, tol=tol).sup_distance

    entries = []
    for n in sorted(int(v) for v in n_list):
        dists = _fan_out([(n, r) for r in range(replicas)], one, workers)
        entries.append(
            LlnEntry(
                n=n,
                replicas=replicas,
                median_distance=float(statistics.median(dists)),
                max_distance=float(max(dists)),
                distances=tuple(float(d) for d in dists),
            )
        )
    return LlnReport(
        target=target,
        entries=tuple(entries),
        seed=seed,
        sim_dt=sim_dt,
        snapshot_times=snapshot_times,
    )


# ---------------------------------------------------------------------------
# ball-probability estimation


@dataclass(frozen=True)
class BallEstimate:
    """Hit-probability estimate with a 1-sigma error bar.

    probability is the point estimate; when no run hits the ball it is
    0.0 and upper_bound carries the 95% rule-of-three interval end
    (weighted by the largest likelihood ratio in importance mode).
    """

    mode: str
    probability: float
    std_error: float
    hits: int
    runs: int
    delta: float
    upper_bound: float | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "probability": self.probability,
            "std_error": self.std_error,
            "hits": self.hits,
            "runs": self.runs,
            "delta": self.delta,
            "upper_bound": self.upper_bound,
        }


def estimate_ball_probability(
    center: GridCdfPath,
    delta: float,
    runs,
    mode: str = "naive",
    tol: float = 1e-6,
) -> BallEstimate:
    """Probability that the base dynamics lands within delta of the center.

    naive mode counts hits directly and expects untilted runs; importance
    mode expects runs simulated under a tilt and reweights each hit by
    the accumulated change-of-measure factor, which makes the estimate
    unbiased for the untilted hitting probability.
    """
    runs = list(runs)
    if delta <= 0:
        raise ValueError("ball radius must be positive")
    if not runs:
        raise ValueError("need at least one run")
    if mode not in ("naive", "importance"):
        raise ValueError(f"unknown mode {mode!r}; expected 'naive' or 'importance'")
    if mode == "importance" and any(r.accumulator.steps == 0 for r in runs):
        raise ValueError("importance mode needs runs simulated under a tilt")
    if mode == "naive" and any(
        r.accumulator.martingale != 0.0 or r.accumulator.quadratic != 0.0 for r in runs
    ):
        raise ValueError("naive mode needs base-dynamics runs; use importance mode")

    hits = np.empty(len(runs))
    weights = np.ones(len(runs))
    for i, run in enumerate(runs):
        dist = path_distance(center, run.snapshots, tol=tol)
        hits[i] = 1.0 if dist.sup_distance < delta else 0.0
        if mode == "importance":
            weights[i] = run.accumulator.importance_weight()

    n = len(runs)
    contrib = hits * weights
    estimate = float(np.mean(contrib))
    n_hits = int(np.sum(hits))
    if n > 1:
        std_error = float(np.std(contrib, ddof=1) / math.sqrt(n))
    else:
        std_error = math.nan
    upper = None
    if n_hits == 0:
        upper = 3.0 / n
        if mode == "importance":
            upper *= float(np.max(weights))
    return BallEstimate(
        mode=mode,
        probability=estimate,
        std_error=std_error,
        hits=n_hits,
        runs=n,
        delta=float(delta),
        upper_bound=upper,
    )


# ---------------------------------------------------------------------------
# tilted probe


@dataclass(frozen=True, eq=False)
class LdpEntry:
    n: int
    cost_mean: float
    cost_std: float
    naive: BallEstimate
    importance: BallEstimate
    log_rate_naive: float | None
    log_rate_naive_se: float | None
    log_rate_importance: float | None
    log_rate_importance_se: float | None

    def to_dict(self) -> dict:
        return {
            "N": self.n,
            "cost_mean": self.cost_mean,
            "cost_std": self.cost_std,
            "naive": self.naive.to_dict(),
            "importance": self.importance.to_dict(),
            "log_rate_naive": self.log_rate_naive,
            "log_rate_naive_se": self.log_rate_naive_se,
            "log_rate_importance": self.log_rate_importance,
            "log_rate_importance_se": self.log_rate_importance_se,
        }


@dataclass(frozen=True, eq=False)
class LdpReport:
    target: GridCdfPath
    j_value: float
    delta: float
    entries: tuple
    seed: int
    sim_dt: float
    snapshot_times: tuple
    traces: dict

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "sim_dt": self.sim_dt,
            "snapshot_times": list(self.snapshot_times),
            "target": _grid_descriptor(self.target),
            "J": self.j_value if math.isfinite(self.j_value) else None,
            "delta": self.delta,
            "entries": [e.to_dict() for e in self.entries],
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def write_trace_csv(self, fileobj) -> None:
        fileobj.write("N,replica,cost,hit,weight\n")
        for n in sorted(self.traces):
            for r, (cost, hit, weight) in enumerate(self.traces[n]):
                fileobj.write(f"{n},{r},{cost!r},{int(hit)},{weight!r}\n")


def _log_rate(est: BallEstimate, n: int):
    """-(1/N) log p with a delta-method error bar; None when p is 0."""
    if est.probability <= 0.0:
        return None, None
    value = -math.log(est.probability) / n
    se = est.std_error / (n * est.probability) if math.isfinite(est.std_error) else None
    return value, se


def run_ldp(
    coeffs: RankCoefficients,
    init: InitialDistribution,
    tilt: TiltField,
    grid: PdeGrid,
    n_list,
    replicas: int,
    sim_dt: float,
    snapshot_times,
    delta: float | None = None,
    solver_options: SolverOptions | None = None,
    seed: int = 0,
    workers: int = 1,
    tol: float = 1e-6,
) -> LdpReport:
    """Cost statistics and ball probabilities around the tilted limit path.

    Tilted clouds supply the cost samples and the importance-sampling
    estimator; independent untilted clouds supply the naive estimator.
    When delta is not given it defaults to twice the median distance of
    the largest tilted clouds from their own limit, which keeps naive
    hits plausible at desk scale while the ball stays informative.
    """
    if replicas < 1:
        raise ValueError("replicas must be positive")
    target = solve_tilted(coeffs, init, tilt, grid, solver_options)
    j_value = rate_functional(target, coeffs).value
    snapshot_times = tuple(float(t) for t in snapshot_times)
    sizes = sorted(int(v) for v in n_list)

    def simulate(job):
        stream, n, replica = job
        cfg = SimConfig(
            n_particles=n,
            dt=sim_dt,
            final_time=grid.final_time,
            snapshot_times=snapshot_times,
            seed=seed,
            stream_key=(stream, n, replica),
        )
        return simulate_path(coeffs, init, cfg, tilt if stream == _TILTED_STREAM else None)

    tilted_runs: dict[int, list[SimulationResult]] = {}
    naive_runs: dict[int, list[SimulationResult]] = {}
    for n in sizes:
        tilted_runs[n] = _fan_out(
            [(_TILTED_STREAM, n, r) for r in range(replicas)], simulate, workers
        )
        naive_runs[n] = _fan_out(
            [(_NAIVE_STREAM, n, r) for r in range(replicas)], simulate, workers
        )

    if delta is None:
        top = sizes[-1]
        dists = [
            path_distance(target, run.snapshots, tol=tol).sup_distance
            for run in tilted_runs[top]
        ]
        delta = 2.0 * float(statistics.median(dists))
    if delta <= 0:
        raise ValueError("ball radius must be positive; give delta explicitly")

    entries = []
    traces = {}
    for n in sizes:
        costs = [pathwise_cost(run.accumulator, n) for run in tilted_runs[n]]
        naive_est = estimate_ball_probability(target, delta, naive_runs[n], "naive", tol=tol)
        is_est = estimate_ball_probability(
            target, delta, tilted_runs[n], "importance", tol=tol
        )
        lr_naive, lr_naive_se = _log_rate(naive_est, n)
        lr_is, lr_is_se = _log_rate(is_est, n)
        entries.append(
            LdpEntry(
                n=n,
                cost_mean=float(np.mean(costs)),
                cost_std=float(np.std(costs, ddof=1)) if len(costs) > 1 else 0.0,
                naive=naive_est,
                importance=is_est,
                log_rate_naive=lr_naive,
                log_rate_naive_se=lr_naive_se,
                log_rate_importance=lr_is,
                log_rate_importance_se=lr_is_se,
            )
        )
        rows = []
        for run in tilted_runs[n]:
            dist = path_distance(target, run.snapshots, tol=tol)
            rows.append(
                (
                    pathwise_cost(run.accumulator, n),
                    dist.sup_distance < delta,
                    run.accumulator.importance_weight(),
                )
            )
        traces[n] = rows
    return LdpReport(
        target=target,
        j_value=j_value,
        delta=float(delta),
        entries=tuple(entries),
        seed=seed,
        sim_dt=sim_dt,
        snapshot_times=snapshot_times,
        traces=traces,
    )
