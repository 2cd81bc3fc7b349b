"""Command line front end.

    pregraph run scenario.scn --trace-out run.jsonl
    pregraph check run.jsonl
    pregraph campaign 1000 --seed 42 --report-out summary.txt
    pregraph metrics run.jsonl --ops 2 --degree 3

Exit codes: 0 success, 1 check failure, 2 usage error, 3 scenario parse error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from .campaign import CampaignRanges, run_campaign
from .checker import account_messages, check_trace
from .scenario import load_scenario
from .sim import Engine, InvalidScenario, SimError
from .trace import Trace

log = logging.getLogger("pregraph")


def _configure_logging() -> None:
    level = os.environ.get("PREGRAPH_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pregraph")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario and write its trace")
    p_run.add_argument("scenario")
    p_run.add_argument("--trace-out", default=None)
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--max-delay", type=int, default=None)
    p_run.add_argument("--colocate-leaders", action="store_true", default=None)
    p_run.add_argument("--leader-strategy", choices=["self", "min-alive"], default=None)
    p_run.add_argument("--cycle-cap", type=int, default=None)

    p_check = sub.add_parser("check", help="verify a trace")
    p_check.add_argument("trace")

    p_camp = sub.add_parser("campaign", help="run N random scenarios through run+check")
    p_camp.add_argument("count", type=int)
    p_camp.add_argument("--seed", type=int, default=0)
    p_camp.add_argument("--report-out", default=None)

    p_met = sub.add_parser("metrics", help="message and delay accounting for a trace")
    p_met.add_argument("trace")
    p_met.add_argument("--ops", type=int, required=True, help="operations per transaction")
    p_met.add_argument("--degree", type=int, required=True, help="replication degree")
    return parser


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (OSError, InvalidScenario) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 3
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.max_delay is not None:
        overrides["max_delay"] = args.max_delay
    if args.colocate_leaders:
        overrides["colocate_leaders"] = True
    if args.leader_strategy is not None:
        overrides["leader_strategy"] = args.leader_strategy
    if args.cycle_cap is not None:
        overrides["cycle_cap"] = args.cycle_cap
    if overrides:
        scenario = dataclasses.replace(scenario, **overrides)
    try:
        trace = Engine(scenario).run()
    except SimError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    out = args.trace_out or (args.scenario + ".jsonl")
    trace.write(out)
    log.info("trace written to %s (%d events)", out, len(trace))
    print(out)
    return 0


def _cmd_check(args) -> int:
    try:
        trace = Trace.read(args.trace)
    except (OSError, ValueError) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return 3
    report = check_trace(trace)
    print(report.render())
    return 0 if report.passed else 1


def _cmd_campaign(args) -> int:
    summary = run_campaign(args.count, args.seed, CampaignRanges())
    text = summary.render()
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0 if summary.passed else 1


def _cmd_metrics(args) -> int:
    try:
        trace = Trace.read(args.trace)
    except (OSError, ValueError) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return 3
    report = account_messages(trace, args.ops, args.degree)
    print(report.render())
    return 0


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = _parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "check": _cmd_check,
        "campaign": _cmd_campaign,
        "metrics": _cmd_metrics,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
