"""Scenario orchestration: dispatch experiments, write every output file.

Every file written here (JSON reports, CSV tables, the config echo) is
byte-stable for a given config and seed regardless of worker count.
Wall-clock timings are inherently volatile, so they live only on the
in-memory report and on the command-line log, never in the files.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

from . import __version__
from .backends import backend_name
from .config import ScenarioConfig
from .coefficients import validate_assumptions
from .errors import ConfigError
from .ldp import LdpReport, LlnReport, run_ldp, run_lln
from .measures import GridCdfPath, write_empirical_path_csv
from .particle import pathwise_cost, simulate_path
from .pde import regularity_diagnostics, solve_forward, solve_tilted
from .rate import RateReport, default_basis, rate_functional, variational_rate

__all__ = ["ExperimentReport", "run_experiment", "emit_plotdata"]


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """What a run produced: config echo, version, stage timings, summaries.

    The echo plus the package version pin the run; loading the echo and
    re-running reproduces every numeric output byte for byte. Timings
    are carried on the object but stay out of the deterministic files.
    """

    experiment: str
    config_echo: dict
    version: str
    outputs: tuple
    summaries: dict
    timings: dict = field(default_factory=dict)

    def to_json(self, include_timings: bool = False) -> str:
        payload = {
            "experiment": self.experiment,
            "version": self.version,
            "config": self.config_echo,
            "outputs": list(self.outputs),
            "summaries": self.summaries,
        }
        if include_timings:
            payload["timings_seconds"] = self.timings
        return json.dumps(payload, sort_keys=True, indent=2)


def emit_plotdata(report, kind: str, out_dir) -> list:
    """Write the plot-ready CSV series for a report; returns paths written."""
    os.makedirs(out_dir, exist_ok=True)
    if kind == "lln":
        if not isinstance(report, LlnReport):
            raise ValueError("lln plot data needs the collapse report")
        path = os.path.join(out_dir, "lln_curve.csv")
        with open(path, "w") as fh:
            fh.write("N,median_distance,max_distance\n")
            for e in report.entries:
                fh.write(f"{e.n},{e.median_distance!r},{e.max_distance!r}\n")
        return [path]
    if kind == "ldp":
        if not isinstance(report, LdpReport):
            raise ValueError("ldp plot data needs the tilted-probe report")
        path = os.path.join(out_dir, "cost_vs_N.csv")
        with open(path, "w") as fh:
            fh.write("N,cost_mean,cost_std,J\n")
            j = report.j_value
            for e in report.entries:
                fh.write(f"{e.n},{e.cost_mean!r},{e.cost_std!r},{j!r}\n")
        return [path]
    if kind == "rate":
        if not isinstance(report, RateReport):
            raise ValueError("rate plot data needs the action report")
        path = os.path.join(out_dir, "integrand.csv")
        with open(path, "w") as fh:
            report.write_integrand_csv(fh)
        return [path]
    raise ValueError(f"unknown plot data kind {kind!r}; expected lln, ldp, or rate")


def _write(path, text) -> str:
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _load_or_solve_path(config: ScenarioConfig, coeffs, init) -> GridCdfPath:
    if config.path_csv is not None:
        return GridCdfPath.from_csv(config.path_csv)
    grid = config.grid.build(config.sim.final_time)
    tilt = config.tilt.build(config.grid, config.sim.final_time)
    if tilt is None:
        return solve_forward(coeffs, init, grid)
    return solve_tilted(coeffs, init, tilt, grid)


def run_experiment(config: ScenarioConfig) -> ExperimentReport:
    """Run the selected experiment and write its outputs under out_dir."""
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    coeffs = config.coefficients.build()
    init = config.init.build()
    outputs: list = []
    summaries: dict = {}
    timings: dict = {}
    t_start = time.perf_counter()

    experiment = config.experiment
    if experiment == "validate":
        report = validate_assumptions(coeffs, init)
        outputs.append(_write(os.path.join(out_dir, "assumptions.json"), report.to_json()))
        summaries["assumptions_passed"] = report.passed

    elif experiment == "simulate":
        tilt = config.tilt.build(config.grid, config.sim.final_time)
        for n in config.sim.n_list:
            for r in range(config.sim.replicas):
                stream = (0, int(n), int(r))
                cfg = config.sim.build(int(n), stream)
                result = simulate_path(coeffs, init, cfg, tilt)
                cloud = os.path.join(out_dir, f"cloud_N{n}_r{r}.csv")
                write_empirical_path_csv(result.snapshots, cloud)
                outputs.append(cloud)
                acc = result.accumulator
                summary = {
                    "replica": int(r),
                    "seed": int(config.sim.seed),
                    "N": int(n),
                    "T": config.sim.final_time,
                    "cost": pathwise_cost(acc, int(n)),
                    "M_N": acc.martingale,
                    "A_N": acc.quadratic,
                }
                outputs.append(
                    _write(
                        os.path.join(out_dir, f"summary_N{n}_r{r}.json"),
                        json.dumps(summary, sort_keys=True, indent=2),
                    )
                )
        summaries["replicas_written"] = len(config.sim.n_list) * config.sim.replicas

    elif experiment in ("solve-pde", "solve-tilted"):
        grid = config.grid.build(config.sim.final_time)
        if experiment == "solve-pde":
            path = solve_forward(coeffs, init, grid)
        else:
            tilt = config.tilt.build(config.grid, config.sim.final_time)
            path = solve_tilted(coeffs, init, tilt, grid)
        csv_path = os.path.join(out_dir, "solution.csv")
        path.to_csv(csv_path)
        outputs.append(csv_path)
        invariants = path.invariants_report()
        outputs.append(
            _write(
                os.path.join(out_dir, "invariants.json"),
                json.dumps(invariants, sort_keys=True, indent=2),
            )
        )
        summaries["solver"] = {k: v for k, v in path.meta.items() if k != "backend"}
        summaries["invariants_ok"] = bool(
            invariants["value_range_ok"] and invariants["monotone_ok"] and invariants["boundary_ok"]
        )

    elif experiment == "rate":
        path = _load_or_solve_path(config, coeffs, init)
        report = rate_functional(path, coeffs)
        outputs.append(_write(os.path.join(out_dir, "rate_report.json"), report.to_json()))
        outputs.extend(emit_plotdata(report, "rate", out_dir))
        summaries["J"] = report.value if report.finite else None
        summaries["finite"] = report.finite

    elif experiment == "variational":
        path = _load_or_solve_path(config, coeffs, init)
        explicit = rate_functional(path, coeffs)
        basis = default_basis(path)
        result = variational_rate(path, coeffs, basis)
        payload = {
            "value": result.value,
            "explicit_J": explicit.value if explicit.finite else None,
            "basis_size": len(basis),
            "gram_rank": result.gram_rank,
            "coefficients": [float(c) for c in result.coefficients],
        }
        outputs.append(
            _write(
                os.path.join(out_dir, "variational.json"),
                json.dumps(payload, sort_keys=True, indent=2),
            )
        )
        summaries["variational_value"] = result.value
        summaries["explicit_J"] = payload["explicit_J"]

    elif experiment == "diagnostics":
        path = _load_or_solve_path(config, coeffs, init)
        report = regularity_diagnostics(path)
        outputs.append(_write(os.path.join(out_dir, "diagnostics.json"), report.to_json()))
        summaries["finite"] = report.finite

    elif experiment == "lln":
        grid = config.grid.build(config.sim.final_time)
        report = run_lln(
            coeffs,
            init,
            grid,
            config.sim.n_list,
            config.sim.replicas,
            config.sim.dt,
            config.sim.snapshot_times,
            seed=config.sim.seed,
            workers=config.workers,
        )
        outputs.append(_write(os.path.join(out_dir, "lln_report.json"), report.to_json()))
        dist_path = os.path.join(out_dir, "distances.csv")
        with open(dist_path, "w") as fh:
            report.write_distance_csv(fh)
        outputs.append(dist_path)
        outputs.extend(emit_plotdata(report, "lln", out_dir))
        summaries["median_distances"] = {
            str(e.n): e.median_distance for e in report.entries
        }

    elif experiment == "ldp":
        grid = config.grid.build(config.sim.final_time)
        tilt = config.tilt.build(config.grid, config.sim.final_time)
        report = run_ldp(
            coeffs,
            init,
            tilt,
            grid,
            config.sim.n_list,
            config.sim.replicas,
            config.sim.dt,
            config.sim.snapshot_times,
            delta=config.delta,
            seed=config.sim.seed,
            workers=config.workers,
        )
        outputs.append(_write(os.path.join(out_dir, "ldp_report.json"), report.to_json()))
        trace_path = os.path.join(out_dir, "trace.csv")
        with open(trace_path, "w") as fh:
            report.write_trace_csv(fh)
        outputs.append(trace_path)
        outputs.extend(emit_plotdata(report, "ldp", out_dir))
        summaries["J"] = report.j_value
        summaries["delta"] = report.delta
        summaries["cost_means"] = {str(e.n): e.cost_mean for e in report.entries}

    else:
        raise ConfigError(f"unknown experiment {experiment!r}")

    timings[experiment] = time.perf_counter() - t_start

    echo_path = os.path.join(out_dir, "config_echo.yaml")
    _write(echo_path, config.dump_echo())
    outputs.append(echo_path)

    report_obj = ExperimentReport(
        experiment=experiment,
        config_echo=config.echo(),
        version=__version__,
        outputs=tuple(sorted(os.path.basename(p) for p in outputs)),
        summaries=summaries,
        timings=timings,
    )
    _write(os.path.join(out_dir, "report.json"), report_obj.to_json())
    meta = {"backend": backend_name(), "version": __version__}
    _write(os.path.join(out_dir, "run_meta.json"), json.dumps(meta, sort_keys=True, indent=2))
    return report_obj
