"""Scenario configuration: YAML loading, whole-file validation, echoes.

A scenario file has six sections (coefficients, init, grid, sim, tilt,
experiment selection plus output settings). Loading validates the whole
file and reports every violation at once, each message naming the field
it concerns. The echo materializes every default so a run can be
reproduced from the echo alone.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .coefficients import InitialDistribution, RankCoefficients
from .errors import ConfigError
from .particle import SimConfig, TiltField
from .pde import PdeGrid, SolverOptions

__all__ = ["ScenarioConfig", "load_config", "parse_config"]

EXPERIMENTS = (
    "validate",
    "simulate",
    "solve-pde",
    "solve-tilted",
    "rate",
    "variational",
    "diagnostics",
    "lln",
    "ldp",
)

_SECTIONS = {
    "coefficients",
    "init",
    "grid",
    "sim",
    "tilt",
    "experiment",
    "out_dir",
    "workers",
    "delta",
    "path_csv",
}


def _as_float(section: str, key: str, raw, errors: list, default=None):
    if raw is None:
        return default
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        errors.append(f"{section}.{key}: expected a number, got {raw!r}")
        return default
    value = float(raw)
    if not math.isfinite(value):
        errors.append(f"{section}.{key}: must be finite")
        return default
    return value


def _as_int(section: str, key: str, raw, errors: list, default=None):
    if raw is None:
        return default
    if isinstance(raw, bool) or not isinstance(raw, int):
        errors.append(f"{section}.{key}: expected an integer, got {raw!r}")
        return default
    return int(raw)


def _as_section(name: str, raw, errors: list) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        errors.append(f"{name}: expected a mapping, got {type(raw).__name__}")
        return {}
    return raw


def _reject_unknown(section: str, raw: dict, allowed: set, errors: list) -> None:
    for key in sorted(set(raw) - allowed):
        errors.append(f"{section}.{key}: unknown field (allowed: {', '.join(sorted(allowed))})")


@dataclass(frozen=True)
class CoefficientsSpec:
    kind: str = "constant"
    drift: float = 0.0
    sigma: float = 1.0
    path: str | None = None

    def build(self) -> RankCoefficients:
        if self.kind == "csv":
            return RankCoefficients.from_csv(self.path)
        return RankCoefficients.constant(self.drift, self.sigma)

    def echo(self) -> dict:
        if self.kind == "csv":
            return {"kind": "csv", "path": self.path}
        return {"kind": "constant", "drift": self.drift, "sigma": self.sigma}


@dataclass(frozen=True)
class InitSpec:
    family: str = "gaussian"
    loc: float = 0.0
    scale: float = 1.0
    table_x: tuple = ()
    table_cdf: tuple = ()

    def build(self) -> InitialDistribution:
        if self.family == "table":
            return InitialDistribution(
                "table",
                table_x=np.asarray(self.table_x, dtype=float),
                table_cdf=np.asarray(self.table_cdf, dtype=float),
            )
        return InitialDistribution(self.family, self.loc, self.scale)

    def echo(self) -> dict:
        if self.family == "table":
            return {
                "family": "table",
                "table_x": [float(v) for v in self.table_x],
                "table_cdf": [float(v) for v in self.table_cdf],
            }
        return {"family": self.family, "loc": self.loc, "scale": self.scale}


@dataclass(frozen=True)
class GridSpec:
    x_min: float = -8.0
    x_max: float = 8.0
    dx: float = 0.02
    dt: float = 2.0e-4
    store_every: int = 0

    def build(self, final_time: float) -> PdeGrid:
        return PdeGrid(self.x_min, self.x_max, self.dx, self.dt, final_time, self.store_every)

    def echo(self) -> dict:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "dx": self.dx,
            "dt": self.dt,
            "store_every": self.store_every,
        }


@dataclass(frozen=True)
class SimSpec:
    n_list: tuple = (1000,)
    dt: float = 1.0e-3
    final_time: float = 1.0
    snapshot_times: tuple = ()
    replicas: int = 1
    seed: int = 0

    def build(self, n: int, stream_key: tuple) -> SimConfig:
        return SimConfig(
            n_particles=n,
            dt=self.dt,
            final_time=self.final_time,
            snapshot_times=self.snapshot_times,
            seed=self.seed,
            stream_key=stream_key,
        )

    def echo(self) -> dict:
        return {
            "n_list": [int(n) for n in self.n_list],
            "dt": self.dt,
            "final_time": self.final_time,
            "snapshot_times": [float(t) for t in self.snapshot_times],
            "replicas": self.replicas,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class TiltSpec:
    kind: str = "none"
    value: float = 0.0
    t_span: tuple = ()
    x_span: tuple = ()
    path: str | None = None

    def build(self, grid: GridSpec, final_time: float) -> TiltField | None:
        if self.kind == "none":
            return None
        if self.kind == "csv":
            return TiltField.from_csv(self.path)
        t_span = self.t_span or (0.0, final_time)
        x_span = self.x_span or (grid.x_min, grid.x_max)
        return TiltField.constant(self.value, t_span, x_span)

    def echo(self, grid: GridSpec, final_time: float) -> dict:
        if self.kind == "none":
            return {"kind": "none"}
        if self.kind == "csv":
            return {"kind": "csv", "path": self.path}
        t_span = self.t_span or (0.0, final_time)
        x_span = self.x_span or (grid.x_min, grid.x_max)
        return {
            "kind": "constant",
            "value": self.value,
            "t_span": [float(v) for v in t_span],
            "x_span": [float(v) for v in x_span],
        }


@dataclass(frozen=True)
class ScenarioConfig:
    coefficients: CoefficientsSpec = field(default_factory=CoefficientsSpec)
    init: InitSpec = field(default_factory=InitSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    sim: SimSpec = field(default_factory=SimSpec)
    tilt: TiltSpec = field(default_factory=TiltSpec)
    experiment: str = "validate"
    out_dir: str = "out"
    workers: int = 1
    delta: float | None = None
    path_csv: str | None = None

    def echo(self) -> dict:
        """Every field with defaults materialized; loading it reproduces the run."""
        return {
            "coefficients": self.coefficients.echo(),
            "init": self.init.echo(),
            "grid": self.grid.echo(),
            "sim": self.sim.echo(),
            "tilt": self.tilt.echo(self.grid, self.sim.final_time),
            "experiment": self.experiment,
            "out_dir": self.out_dir,
            "workers": self.workers,
            "delta": self.delta,
            "path_csv": self.path_csv,
        }

    def dump_echo(self) -> str:
        return yaml.safe_dump(self.echo(), sort_keys=True, default_flow_style=False)

    def build_solver_options(self) -> SolverOptions:
        return SolverOptions()


def _parse_coefficients(raw: dict, errors: list) -> CoefficientsSpec:
    _reject_unknown("coefficients", raw, {"kind", "drift", "sigma", "path"}, errors)
    kind = raw.get("kind", "constant")
    if kind not in ("constant", "csv"):
        errors.append(f"coefficients.kind: expected 'constant' or 'csv', got {kind!r}")
        kind = "constant"
    drift = _as_float("coefficients", "drift", raw.get("drift"), errors, 0.0)
    sigma = _as_float("coefficients", "sigma", raw.get("sigma"), errors, 1.0)
    path = raw.get("path")
    if kind == "csv":
        if not path:
            errors.append("coefficients.path: required when kind is 'csv'")
        elif not os.path.isfile(path):
            errors.append(f"coefficients.path: file not found: {path}")
    else:
        if sigma is not None and sigma <= 0.0:
            errors.append("coefficients.sigma: noise scale must be positive")
        path = None
    return CoefficientsSpec(kind, drift, sigma, path)


def _parse_init(raw: dict, errors: list) -> InitSpec:
    _reject_unknown("init", raw, {"family", "loc", "scale", "table_x", "table_cdf"}, errors)
    family = raw.get("family", "gaussian")
    if family not in ("gaussian", "logistic", "uniform", "table"):
        errors.append(
            f"init.family: expected gaussian, logistic, uniform, or table, got {family!r}"
        )
        family = "gaussian"
    loc = _as_float("init", "loc", raw.get("loc"), errors, 0.0)
    scale = _as_float("init", "scale", raw.get("scale"), errors, 1.0)
    if scale is not None and scale <= 0.0:
        errors.append("init.scale: must be positive")
        scale = 1.0
    tx = raw.get("table_x") or ()
    tf = raw.get("table_cdf") or ()
    if family == "table":
        if not isinstance(tx, (list, tuple)) or not isinstance(tf, (list, tuple)) or not tx or not tf:
            errors.append("init.table_x / init.table_cdf: required lists for the table family")
            tx, tf = (), ()
    return InitSpec(family, loc, scale, tuple(tx), tuple(tf))


def _parse_grid(raw: dict, errors: list) -> GridSpec:
    _reject_unknown("grid", raw, {"x_min", "x_max", "dx", "dt", "store_every"}, errors)
    x_min = _as_float("grid", "x_min", raw.get("x_min"), errors, -8.0)
    x_max = _as_float("grid", "x_max", raw.get("x_max"), errors, 8.0)
    dx = _as_float("grid", "dx", raw.get("dx"), errors, 0.02)
    dt = _as_float("grid", "dt", raw.get("dt"), errors, 2.0e-4)
    store_every = _as_int("grid", "store_every", raw.get("store_every"), errors, 0)
    if x_min is not None and x_max is not None and x_min >= x_max:
        errors.append("grid.x_min: must lie strictly below grid.x_max")
    if dx is not None and dx <= 0.0:
        errors.append("grid.dx: must be positive")
    if dt is not None and dt <= 0.0:
        errors.append("grid.dt: must be positive")
    if store_every is not None and store_every < 0:
        errors.append("grid.store_every: must be >= 0")
    return GridSpec(x_min, x_max, dx, dt, store_every)


def _parse_sim(raw: dict, errors: list) -> SimSpec:
    _reject_unknown(
        "sim", raw, {"n_list", "dt", "final_time", "snapshot_times", "replicas", "seed"}, errors
    )
    n_raw = raw.get("n_list", [1000])
    n_list: tuple = ()
    if not isinstance(n_raw, (list, tuple)) or len(n_raw) == 0:
        errors.append("sim.n_list: must be a nonempty list of particle counts")
    else:
        bad = [v for v in n_raw if isinstance(v, bool) or not isinstance(v, int) or v < 1]
        if bad:
            errors.append(f"sim.n_list: entries must be positive integers, got {bad!r}")
        else:
            n_list = tuple(int(v) for v in n_raw)
    dt = _as_float("sim", "dt", raw.get("dt"), errors, 1.0e-3)
    final_time = _as_float("sim", "final_time", raw.get("final_time"), errors, 1.0)
    if dt is not None and dt <= 0.0:
        errors.append("sim.dt: must be positive")
    if final_time is not None and final_time <= 0.0:
        errors.append("sim.final_time: must be positive")
    snaps_raw = raw.get("snapshot_times", [])
    snaps: tuple = ()
    if not isinstance(snaps_raw, (list, tuple)):
        errors.append("sim.snapshot_times: must be a list of times")
    else:
        bad = [v for v in snaps_raw if isinstance(v, bool) or not isinstance(v, (int, float))]
        if bad:
            errors.append(f"sim.snapshot_times: entries must be numbers, got {bad!r}")
        else:
            snaps = tuple(float(v) for v in snaps_raw)
            if final_time is not None and any(t < 0.0 or t > final_time for t in snaps):
                errors.append("sim.snapshot_times: every time must lie in [0, final_time]")
    replicas = _as_int("sim", "replicas", raw.get("replicas"), errors, 1)
    if replicas is not None and replicas < 1:
        errors.append("sim.replicas: must be >= 1")
    seed = _as_int("sim", "seed", raw.get("seed"), errors, 0)
    if seed is not None and seed < 0:
        errors.append("sim.seed: must be >= 0")
    return SimSpec(n_list, dt, final_time, snaps, replicas, seed)


def _parse_tilt(raw: dict, errors: list) -> TiltSpec:
    _reject_unknown("tilt", raw, {"kind", "value", "t_span", "x_span", "path"}, errors)
    kind = raw.get("kind", "none")
    if kind not in ("none", "constant", "csv"):
        errors.append(f"tilt.kind: expected none, constant, or csv, got {kind!r}")
        kind = "none"
    value = _as_float("tilt", "value", raw.get("value"), errors, 0.0)
    path = raw.get("path")
    if kind == "csv":
        if not path:
            errors.append("tilt.path: required when kind is 'csv'")
        elif not os.path.isfile(path):
            errors.append(f"tilt.path: file not found: {path}")
    else:
        path = None

    def span(key):
        v = raw.get(key)
        if v is None:
            return ()
        if (
            not isinstance(v, (list, tuple))
            or len(v) != 2
            or any(isinstance(e, bool) or not isinstance(e, (int, float)) for e in v)
            or float(v[0]) >= float(v[1])
        ):
            errors.append(f"tilt.{key}: expected [lo, hi] with lo < hi, got {v!r}")
            return ()
        return (float(v[0]), float(v[1]))

    return TiltSpec(kind, value, span("t_span"), span("x_span"), path)


def parse_config(raw: dict, base_dir: str = ".") -> ScenarioConfig:
    """Validate a parsed mapping, collecting every violation before raising."""
    if not isinstance(raw, dict):
        raise ConfigError("scenario config must be a mapping at the top level")
    errors: list = []
    _reject_unknown("config", raw, _SECTIONS, errors)

    def resolve(p):
        if p is None or os.path.isabs(str(p)):
            return p
        return os.path.join(base_dir, str(p))

    coeff_raw = dict(_as_section("coefficients", raw.get("coefficients"), errors))
    if "path" in coeff_raw:
        coeff_raw["path"] = resolve(coeff_raw["path"])
    tilt_raw = dict(_as_section("tilt", raw.get("tilt"), errors))
    if "path" in tilt_raw:
        tilt_raw["path"] = resolve(tilt_raw["path"])

    coefficients = _parse_coefficients(coeff_raw, errors)
    init = _parse_init(_as_section("init", raw.get("init"), errors), errors)
    grid = _parse_grid(_as_section("grid", raw.get("grid"), errors), errors)
    sim = _parse_sim(_as_section("sim", raw.get("sim"), errors), errors)
    tilt = _parse_tilt(tilt_raw, errors)
    # materialize span defaults so the echo is its own fixed point
    if tilt.kind == "constant" and not errors:
        tilt = TiltSpec(
            "constant",
            tilt.value,
            tilt.t_span or (0.0, sim.final_time),
            tilt.x_span or (grid.x_min, grid.x_max),
            None,
        )

    experiment = raw.get("experiment", "validate")
    if experiment not in EXPERIMENTS:
        errors.append(
            f"experiment: unknown experiment {experiment!r} (choose from {', '.join(EXPERIMENTS)})"
        )
        experiment = "validate"
    if experiment in ("solve-tilted", "ldp") and tilt.kind == "none":
        errors.append(f"tilt.kind: experiment {experiment!r} needs a tilt, got 'none'")

    out_dir = raw.get("out_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        errors.append(f"out_dir: expected a nonempty string, got {out_dir!r}")
        out_dir = "out"
    workers = _as_int("config", "workers", raw.get("workers"), errors, 1)
    if workers is not None and workers < 1:
        errors.append("workers: must be >= 1")
        workers = 1
    delta = _as_float("config", "delta", raw.get("delta"), errors, None)
    if delta is not None and delta <= 0.0:
        errors.append("delta: ball radius must be positive when given")
    path_csv = resolve(raw.get("path_csv"))
    if path_csv is not None:
        if not isinstance(path_csv, str):
            errors.append(f"path_csv: expected a string path, got {path_csv!r}")
            path_csv = None
        elif not os.path.isfile(path_csv):
            errors.append(f"path_csv: file not found: {path_csv}")

    if errors:
        raise ConfigError("invalid scenario config:\n  " + "\n  ".join(errors))
    return ScenarioConfig(
        coefficients=coefficients,
        init=init,
        grid=grid,
        sim=sim,
        tilt=tilt,
        experiment=experiment,
        out_dir=str(raw.get("out_dir", "out")),
        workers=int(workers),
        delta=delta,
        path_csv=path_csv,
    )


def load_config(path) -> ScenarioConfig:
    """Read and validate a YAML scenario file; relative paths resolve beside it."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if raw is None:
        raw = {}
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))
