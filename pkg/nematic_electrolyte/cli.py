"""Command line entrypoints for the nematic electrolyte simulator."""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys
from typing import Sequence

from .config import ConfigError, load_config, parse_overrides
from .diagnostics import check_diagnostics
from .driver import (
    MANIFEST_NAME,
    CheckpointError,
    read_diagnostics,
    resume,
    run,
)
from .electrostatics import (
    DirectorBoundExceeded,
    NoConvergence,
    NonNeutralCharge,
    UnresolvedCharge,
)
from .flow import CERTIFICATE_SAMPLES, CoefficientGateError, validate_leslie
from .presets import HypothesisViolation, InvalidPreset
from .snapshots import SnapshotFormatError
from .state import StepRejected

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2

USAGE_ERRORS = (
    ConfigError,
    CoefficientGateError,
    HypothesisViolation,
    InvalidPreset,
    CheckpointError,
    SnapshotFormatError,
    FileNotFoundError,
)
INVARIANT_ERRORS = (
    StepRejected,
    NoConvergence,
    NonNeutralCharge,
    UnresolvedCharge,
    DirectorBoundExceeded,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print_result(result) -> None:
    print(f"Completed {result.steps} steps at t = {result.state.time:.6g}")
    print(f"Diagnostics: {result.diagnostics_path}")
    print(f"Manifest: {result.manifest_path}")
    if result.dt_history:
        print(f"Steps with dt halving: {len(result.dt_history)}")


def _command_run(args: argparse.Namespace) -> int:
    config = load_config(Path(args.config), parse_overrides(args.set))
    result = run(config, Path(args.output_dir), max_steps=args.steps)
    _print_result(result)
    return EXIT_OK


def _command_resume(args: argparse.Namespace) -> int:
    output_dir = Path(args.output_dir) if args.output_dir else None
    result = resume(Path(args.checkpoint), output_dir, max_steps=args.steps)
    _print_result(result)
    return EXIT_OK


def _command_validate(args: argparse.Namespace) -> int:
    verdict = validate_leslie(args.alpha, samples=args.samples)
    status = "admissible" if verdict.admissible else "inadmissible"
    print(f"{status} delta={verdict.delta:.6g} delta_prime={verdict.delta_prime:.6g}")
    return EXIT_OK


def _check_settings(args: argparse.Namespace) -> dict:
    settings = {"c_bar": 2.0, "barrier_lambda": 1e-3, "dim": 2, "h2_monitor": False}
    manifest_path = Path(args.diagnostics).parent / MANIFEST_NAME
    if manifest_path.exists():
        config = json.loads(manifest_path.read_text(encoding="utf-8")).get("config", {})
        settings.update(
            c_bar=config.get("c_bar", settings["c_bar"]),
            barrier_lambda=config.get("barrier_lambda", settings["barrier_lambda"]),
            dim=config.get("dim", settings["dim"]),
            h2_monitor=config.get("h2_monitor_mode", settings["h2_monitor"]),
        )
    for key in ("c_bar", "barrier_lambda", "dim"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    if args.h2_monitor:
        settings["h2_monitor"] = True
    return settings


def _command_check(args: argparse.Namespace) -> int:
    path = Path(args.diagnostics)
    if not path.exists():
        raise FileNotFoundError(f"Diagnostics file {path} does not exist.")
    violations = check_diagnostics(read_diagnostics(path), **_check_settings(args))
    if violations:
        for violation in violations:
            print(f"VIOLATION: {violation}")
        return EXIT_INVARIANT
    print(f"All invariant contracts hold for {path}")
    return EXIT_OK


def _command_plot(args: argparse.Namespace) -> int:
    from .plotting import plot_diagnostics

    path = Path(args.diagnostics)
    if not path.exists():
        raise FileNotFoundError(f"Diagnostics file {path} does not exist.")
    output = Path(args.output) if args.output else path.with_suffix(".png")
    figure_path = plot_diagnostics(read_diagnostics(path), output)
    if figure_path is None:
        print("Plotting requires matplotlib and seaborn. Install dependencies and retry.")
        return EXIT_USAGE
    print(f"Figure written to {figure_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(description="Nematic electrolyte simulator.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log debug output")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings only")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Run a simulation from a config file")
    run_parser.add_argument("config", help="Path to a key = value config file")
    run_parser.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="Override a config value"
    )
    run_parser.add_argument("--output-dir", default="output", help="Directory for run output")
    run_parser.add_argument("--steps", type=int, help="Stop after this many steps")
    run_parser.set_defaults(func=_command_run)

    validate_parser = subparsers.add_parser(
        "validate-coefficients", help="Check the Leslie coefficient condition"
    )
    validate_parser.add_argument("alpha", nargs=6, type=float, help="alpha_1 ... alpha_6")
    validate_parser.add_argument(
        "--samples", type=int, default=CERTIFICATE_SAMPLES, help="Random certificate samples"
    )
    validate_parser.set_defaults(func=_command_validate)

    check_parser = subparsers.add_parser(
        "check", help="Re-verify invariant contracts on a diagnostics file"
    )
    check_parser.add_argument("diagnostics", help="Path to diagnostics.csv")
    check_parser.add_argument("--c-bar", dest="c_bar", type=float, help="Upper density bound")
    check_parser.add_argument(
        "--lambda", dest="barrier_lambda", type=float, help="Barrier regularization"
    )
    check_parser.add_argument("--dim", type=int, choices=(2, 3), help="Spatial dimension")
    check_parser.add_argument("--h2-monitor", action="store_true", help="Also bound lap_n_2")
    check_parser.set_defaults(func=_command_check)

    resume_parser = subparsers.add_parser("resume", help="Continue a run from a checkpoint")
    resume_parser.add_argument("checkpoint", help="Path to checkpoint.npz")
    resume_parser.add_argument("--output-dir", help="Directory for run output")
    resume_parser.add_argument("--steps", type=int, help="Stop after this many more steps")
    resume_parser.set_defaults(func=_command_resume)

    plot_parser = subparsers.add_parser("plot", help="Plot a diagnostics file")
    plot_parser.add_argument("diagnostics", help="Path to diagnostics.csv")
    plot_parser.add_argument("--output", help="Figure path (default: next to the CSV)")
    plot_parser.set_defaults(func=_command_plot)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except INVARIANT_ERRORS as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    raise SystemExit(main())
