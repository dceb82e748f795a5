"""Command line entry point.

    refchain run <scenario> [--log PATH] [--stress]
    refchain summarize <log.csv> --pairs ref/group=measured/group [...]
    refchain validate <scenario>
    refchain list

``<scenario>`` is a YAML path or the name of a shipped scenario.
Exit codes: 0 ok, 2 config/wiring error, 3 runtime FaultStop, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .chain import ConfigError, WiringError
from .scenario import (
    ReportError,
    build,
    load_scenario,
    run_scenario,
    shipped_scenarios,
    summarize,
)

EXIT_OK, EXIT_CONFIG, EXIT_FAULT, EXIT_IO = 0, 2, 3, 4


def _load(path):
    try:
        return load_scenario(path), None
    except (ConfigError, WiringError) as exc:
        return None, (EXIT_CONFIG, f"config error: {exc}")
    except OSError as exc:
        return None, (EXIT_IO, f"i/o error: {exc}")


def cmd_run(args) -> int:
    scenario, err = _load(args.scenario)
    if err:
        print(err[1], file=sys.stderr)
        return err[0]
    result = run_scenario(scenario, log_path=args.log, stress=args.stress)
    if result.exit_code == EXIT_CONFIG:
        print(f"config error: {result.message}", file=sys.stderr)
        return result.exit_code
    if result.exit_code != EXIT_OK:
        print(result.message, file=sys.stderr)
    report = {
        "scenario": scenario.name,
        "cycles": result.cycles,
        "log": None if result.log_path is None else str(result.log_path),
        "trajectories": [
            {"label": label, "id": traj_id, "result": code} for label, traj_id, code in result.results
        ],
        "errors": result.summary,
    }
    print(json.dumps(report, indent=2))
    return result.exit_code


def cmd_summarize(args) -> int:
    try:
        report = summarize(args.log, args.pairs)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario, err = _load(args.scenario)
    if err:
        print(err[1], file=sys.stderr)
        return err[0]
    try:
        _, pipeline = build(scenario)
    except (ConfigError, WiringError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    chain = " -> ".join(c.name for c in pipeline.components)
    print(f"{scenario.name}: ok ({chain} @ {scenario.frequency:g} Hz, {len(scenario.events)} events)")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in shipped_scenarios():
        print(name)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refchain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and log every cycle")
    run.add_argument("scenario")
    run.add_argument("--log", help="CSV output path (overrides the scenario's log key)")
    run.add_argument("--stress", action="store_true", help="inject timeline events from a second thread")
    run.set_defaults(func=cmd_run)

    summ = sub.add_parser("summarize", help="tracking-error report from a cycle log")
    summ.add_argument("log")
    summ.add_argument("--pairs", nargs="+", required=True, metavar="REF=MEAS")
    summ.set_defaults(func=cmd_summarize)

    val = sub.add_parser("validate", help="build the pipeline without running it")
    val.add_argument("scenario")
    val.set_defaults(func=cmd_validate)

    lst = sub.add_parser("list", help="names of the shipped scenarios")
    lst.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
