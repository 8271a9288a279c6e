"""Command-line surface: one subcommand per experiment, shared flags.

Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
failures (blow-ups, broken monotonicity, indefinite quadratic forms).
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import EXPERIMENTS, load_config
from .errors import ConfigError, NumericsError
from .harness import run_experiment

_DESCRIPTIONS = {
    "validate": "check model assumptions and the scenario file",
    "simulate": "run particle replicas and dump cloud snapshots",
    "solve-pde": "solve the hydrodynamic limit equation",
    "solve-tilted": "solve the limit equation under the configured tilt",
    "rate": "evaluate the action of a stored or solved path",
    "variational": "bound the action from below with a test basis",
    "diagnostics": "integral regularity diagnostics of a path",
    "lln": "cloud-collapse study over the configured sizes",
    "ldp": "tilted cost and ball-probability study",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ranklab",
        description="desk-scale laboratory for rank-interacting diffusions",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario YAML file")
    common.add_argument("--seed", type=int, default=None, help="override the root seed")
    common.add_argument("--out-dir", default=None, help="override the output directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads for replicas")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=_DESCRIPTIONS[name])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        config = dataclasses.replace(config, experiment=args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            config = dataclasses.replace(
                config, sim=dataclasses.replace(config.sim, seed=args.seed)
            )
        if args.out_dir is not None:
            config = dataclasses.replace(config, out_dir=args.out_dir)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            config = dataclasses.replace(config, workers=args.threads)
        report = run_experiment(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for stage, seconds in report.timings.items():
        print(f"{stage}: {seconds:.2f}s", file=sys.stderr)
    print(f"wrote {len(report.outputs)} files to {config.out_dir}")
    for key, value in sorted(report.summaries.items()):
        print(f"  {key}: {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
