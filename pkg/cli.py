# cli.py
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from exceptions import ConfigError, HarnessError, SpecValidationError
from harness import (
    load_bundle,
    load_experiment,
    output_directory,
    render_summary,
    report_schema,
    run_experiment,
    run_oracle,
    simulate,
)
from settings import TOOL_VERSION, configure_logging

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _target(args: argparse.Namespace, spec) -> Path:
    return Path(args.out) if args.out else output_directory(spec)


def cmd_validate(args: argparse.Namespace) -> int:
    spec = load_experiment(args.config)
    print(f"✅ {args.config}: {spec.name} is valid (S={spec.S}, design={spec.design.value})")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    spec = load_experiment(args.config)
    print(f"🔄 Running {spec.name} (S={spec.S}, design={spec.design.value}, seed={spec.master_seed})")
    target = _target(args, spec)
    bundle = run_experiment(spec, workers=args.workers, directory=target)
    print(render_summary(bundle))
    print(f"📦 Report written to {target}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    spec = load_experiment(args.config)
    print(f"🔄 Enumerating {spec.name} exactly")
    target = _target(args, spec)
    bundle = run_oracle(spec, workers=args.workers, directory=target, budget=args.budget)
    print(render_summary(bundle))
    print(f"📦 Report written to {target}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = load_experiment(args.config)
    summary = simulate(spec, replications=args.replications, workers=args.workers, progress=not args.quiet)
    print(json.dumps(summary.model_dump(mode="json"), indent=2))
    lo, hi = summary.calibration_interval
    calibrated = lo <= summary.system_rejection_rate <= hi
    print(f"{'✅' if calibrated else '❌'} system test rejection rate {summary.system_rejection_rate:.4f} "
          f"(99% band around alpha: [{lo:.4f}, {hi:.4f}])")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    bundle = load_bundle(Path(args.bundle))
    print(render_summary(bundle))
    print(f"✅ Content digest verified: {bundle.content_digest}")
    return EXIT_OK


def cmd_schema(args: argparse.Namespace) -> int:
    print(json.dumps(report_schema(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ege-harness",
        description="Compare methods over a population of processing systems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    parser.add_argument("--log-level", default=None, help="overrides EGE_HARNESS_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate an experiment file")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    for name, func, help_text in (
        ("run", cmd_run, "sample, execute and report"),
        ("oracle", cmd_oracle, "exact values by enumeration"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")
        p.add_argument("--out", default=None, help="output directory (default from the experiment file)")
        p.add_argument("--workers", type=int, default=None, help="parallelism limit (overrides EGE_HARNESS_WORKERS)")
        if name == "oracle":
            p.add_argument("--budget", type=int, default=None, help="maximum number of enumerated systems")
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="replicate a synthetic-surface experiment")
    p.add_argument("config")
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--quiet", action="store_true", help="no progress bar")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="re-render an emitted bundle and check its digest")
    p.add_argument("bundle", help="directory holding report.json and runs.csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("schema", help="print the JSON schema of report.json")
    p.set_defaults(func=cmd_schema)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except (SpecValidationError, ConfigError) as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (HarnessError, OSError) as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
