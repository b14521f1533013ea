"""Command-line entry point: ``isac-slp {roc,sweep,solve,validate}``."""

import argparse
import sys
import time

import numpy as np

from ..solver import InvariantViolation
from ..statkit import BracketError, ConvergenceError
from .config import EXPERIMENTS, PROFILES, SCHEMA, ConfigError, load_config, profile_spec
from .experiments import ExperimentFailure, SchemeError, run_experiment
from .table import TableFileError, emit_table, write_manifest
from .validate import all_passed

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

NUMERIC_ERRORS = (ArithmeticError, np.linalg.LinAlgError, InvariantViolation,
                  ConvergenceError, BracketError, SchemeError)


def _key_help():
    lines = ["configuration keys (flat 'key = value', '#' comments):"]
    lines += [f"  {k}" for k in SCHEMA]
    lines.append("  profile  (start from a built-in profile: " + ", ".join(PROFILES) + ")")
    return "\n".join(lines)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--profile", choices=sorted(PROFILES), default="desk",
                        help="base profile the config file overrides (default: desk)")
    common.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (u64)")
    common.add_argument("--out", help="output table path (default: experiment.output_path)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int,
                        help="worker threads (ISAC_SLP_THREADS overrides; default: all cores)")
    parser = argparse.ArgumentParser(
        prog="isac-slp",
        description="SI-aware symbol-level precoding experiments.",
        epilog=_key_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "roc": "detection probability versus false-alarm rate",
        "sweep": "DoA RMSE and detection probability versus target distance",
        "solve": "solver diagnostics per channel realisation",
        "validate": "oracle cross-checks as pass/fail rows",
    }
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=helps[name], epilog=_key_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def load_spec(args):
    if args.config:
        spec = load_config(args.config, profile=args.profile)
    else:
        spec = profile_spec(args.profile)
    changes = {"experiment": args.command}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out:
        changes["output_path"] = args.out
    return spec.with_(**changes)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    start = time.perf_counter()
    status = EXIT_OK
    try:
        table = run_experiment(spec, threads=args.threads)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        table, status = exc.table, EXIT_NUMERIC
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    wall = time.perf_counter() - start

    try:
        emit_table(table, spec.output_path, args.format)
        write_manifest(spec.output_path + ".manifest.json", spec, spec.seed, wall,
                       extra={"status": status, "rows": len(table)})
    except TableFileError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if spec.experiment == "validate":
        ok = all_passed(table)
        print("validation " + ("passed" if ok else "FAILED"), file=sys.stderr)
    print(f"wrote {len(table)} rows to {spec.output_path} in {wall:.1f} s", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
