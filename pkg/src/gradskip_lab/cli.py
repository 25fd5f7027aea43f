"""Command-line entry point: ``gradskip-lab run|summarize|verify``."""

import argparse
import sys

from . import experiment
from .errors import AggregationError, ConfigError, GradSkipError, OracleCheckError, ParseError

EXIT_OK, EXIT_INVALID, EXIT_ORACLE = 0, 1, 2


def _cmd_run(args):
    summary = experiment.run_experiment(args.config)
    print(experiment.summary_as_text(summary))
    return EXIT_OK


def _cmd_summarize(args):
    summary = experiment.emit_summary(args.trace_dir)
    if args.out:
        experiment.write_summary(summary, args.out)
    print(experiment.summary_as_text(summary))
    return EXIT_OK


def _cmd_verify(args):
    results = experiment.verify_suite(args.config, seed=args.seed)
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        print(f"{tag} {r.name}" + (f": {r.detail}" if r.detail else ""))
    return EXIT_OK if all(r.passed for r in results) else EXIT_ORACLE


def build_parser():
    parser = argparse.ArgumentParser(prog="gradskip-lab",
                                     description="Simulate GradSkip-family methods.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every (method, seed) pair of a config")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("summarize", help="aggregate an existing trace directory")
    p.add_argument("trace_dir")
    p.add_argument("--out", help="write summary.json and summary.csv here")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("verify", help="run oracle checks on the configured problem")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, AggregationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OracleCheckError as exc:
        print(f"oracle check failed: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except GradSkipError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
