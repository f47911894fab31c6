"""Command-line entry point.

``fedsim run <config.json> --out <dir>`` runs a simulation and writes the
report files; ``fedsim validate <config.json>`` checks a configuration;
``fedsim synth`` writes a synthetic CSV dataset.  Exit codes: 0 success,
1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, build_inputs, emit_reports, load_config, synth_dataset
from .engine import run_simulation

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Deterministic federated-learning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulation from a config file")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, required=True, help="report output directory")

    validate = sub.add_parser("validate", help="validate a config file")
    validate.add_argument("config", type=Path)

    synth = sub.add_parser("synth", help="write a synthetic CSV dataset")
    synth.add_argument("--classes", type=int, required=True)
    synth.add_argument("--features", type=int, required=True)
    synth.add_argument("--rows", type=int, required=True)
    synth.add_argument("--separation", type=float, default=2.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", type=Path, required=True, help="output CSV path")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    try:
        client_datasets, test_set = build_inputs(config, base_dir=args.config.parent)
        reports = run_simulation(config, client_datasets, test_set)
        emit_reports(reports, args.out, config)
    except ConfigError:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(reports)} iteration reports to {args.out}")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    load_config(args.config)
    print(f"{args.config}: ok")
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    try:
        data = synth_dataset(
            classes=args.classes,
            features=args.features,
            rows=args.rows,
            separation=args.separation,
            rng=np.random.default_rng(np.random.SeedSequence(args.seed)),
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"f{i}" for i in range(args.features)] + ["label"])
        for row, label in zip(data.features, data.labels):
            writer.writerow([f"{v:.9f}" for v in row] + [int(label)])
    print(f"wrote {len(data)} rows to {args.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "validate": _cmd_validate, "synth": _cmd_synth}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # simulation failures land here
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
