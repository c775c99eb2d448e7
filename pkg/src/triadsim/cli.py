"""Command line front end.

Subcommands:
  run            execute a scenario (builtin name or YAML path) and export traces
  list-builtins  show bundled scenarios
  validate       check a scenario file without running it
  summarize      recompute metrics from an exported trace directory
"""
from __future__ import annotations

import argparse
import json
import sys

from .runner import run_scenario
from .scenarios import (ScenarioError, list_builtins, load_scenario,
                        parse_duration, resolve_scenario, validate)
from .traceio import TraceDirError, summarize_dir


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = resolve_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    horizon = parse_duration(args.horizon) if args.horizon is not None else None
    result = run_scenario(scenario, seed=args.seed, horizon_ns=horizon, out_dir=args.out)
    summary = result.summary.to_dict()
    if args.out is not None:
        print(f"trace written to {args.out}")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_list_builtins(_args: argparse.Namespace) -> int:
    for name, description in list_builtins():
        print(f"{name:24s} {description}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.file)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    problems = validate(scenario)
    if problems:
        for problem in problems:
            print(f"error: {problem}", file=sys.stderr)
        return 2
    print(f"{args.file}: ok")
    return 0


def _cmd_summarize(args: argparse.Namespace) -> int:
    try:
        summary = summarize_dir(args.trace_dir)
    except (TraceDirError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="triadsim",
                                     description="deterministic trusted-time cluster simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and print its summary")
    p_run.add_argument("scenario", help="builtin scenario name or path to a YAML file")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--horizon", default=None,
                       help="override the horizon (duration such as 90s, 10m, 2h)")
    p_run.add_argument("--out", default=None, help="directory to export trace CSVs into")
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list-builtins", help="list bundled scenarios")
    p_list.set_defaults(func=_cmd_list_builtins)

    p_val = sub.add_parser("validate", help="validate a scenario file")
    p_val.add_argument("file")
    p_val.set_defaults(func=_cmd_validate)

    p_sum = sub.add_parser("summarize", help="recompute metrics from a trace directory")
    p_sum.add_argument("trace_dir")
    p_sum.set_defaults(func=_cmd_summarize)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
