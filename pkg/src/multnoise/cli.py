"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .experiments import ExperimentConfig, NumericalFailure, config_from_dict, render, run
from .io import ConfigError, read_json
from .system import ExplosionError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multnoise", description="Identify linear systems with multiplicative noise from rollouts.")
    p.add_argument("experiment", choices=("simple", "network", "custom"))
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, action="append", help="seed (repeatable); overrides the config seeds")
    p.add_argument("--rollouts", type=int, help="largest number of rollouts")
    p.add_argument("--horizon", type=int, help="rollout length")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--threads", type=int, help="simulation worker threads")
    return p


def make_config(args) -> ExperimentConfig:
    doc = read_json(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{args.config}: expected a JSON object")
    if doc.get("experiment", args.experiment) != args.experiment:
        raise ConfigError(f"config is for experiment {doc['experiment']!r}, not {args.experiment!r}")
    doc["experiment"] = args.experiment
    cfg = config_from_dict(doc)
    overrides = {
        "seeds": tuple(args.seed) if args.seed else None,
        "rollouts": args.rollouts,
        "horizon": args.horizon,
        "out": args.out,
        "format": args.format,
        "threads": args.threads,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "rollouts" in overrides and cfg.grid is not None:
        overrides["grid"] = tuple(g for g in cfg.grid if g < args.rollouts) + (args.rollouts,)
    try:
        return dataclasses.replace(cfg, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        if cfg.experiment == "custom":
            from .experiments import custom_system

            custom_system(cfg)  # surface file problems as configuration errors
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = render(cfg, run(cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ExplosionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # out-of-range values that pass parsing, e.g. a degenerate schedule
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out:
        try:
            Path(cfg.out).write_text(text, newline="")
        except OSError as exc:
            print(f"cannot write {cfg.out}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
