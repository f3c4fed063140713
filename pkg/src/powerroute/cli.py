"""Command-line front end.

    powerroute run <scenario> [--trace [PATH]] [--max-sweeps N] [--oracle-check]
    powerroute validate <scenario>

Exit codes: 0 every transaction settled, 1 at least one denial,
2 bad input (unreadable file, parse or validation failure, bad flag
value), 3 internal defect (non-convergence, payment mismatch, oracle
disagreement). The report goes to stdout; --trace writes the per-sweep
routing history to PATH (default: <scenario>.trace).
"""

from __future__ import annotations

import argparse
import sys

from .engine import World, settle_one
from .errors import PowerRouteError, ScenarioError
from .report import render_report, render_trace
from .routing import Denied, Route, oracle_enumerate
from .scenario import parse_scenario

ORACLE_TOL = 1e-6


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(1, f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario(text)


def _oracle_mismatch(settlement, expected) -> str | None:
    if isinstance(expected, Route):
        if not settlement.settled:
            return f"oracle found route {'-'.join(expected.path)} but protocol denied"
        if settlement.route != expected.path:
            return (
                f"route {'-'.join(settlement.route)} != "
                f"oracle {'-'.join(expected.path)}"
            )
        scale = max(1.0, abs(expected.total_cost))
        if abs(settlement.total - expected.total_cost) > ORACLE_TOL * scale:
            return (
                f"cost {settlement.total:.6f} != oracle {expected.total_cost:.6f}"
            )
        return None
    assert isinstance(expected, Denied)
    if settlement.settled:
        return f"protocol settled but oracle denied ({expected.reason.value})"
    if settlement.reason != expected.reason:
        return (
            f"denial reason {settlement.reason.value} != "
            f"oracle {expected.reason.value}"
        )
    return None


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = _load(args.scenario)
        world = World(scenario.markets, scenario.ties)
    except ScenarioError as exc:
        return _fail(2, str(exc))

    initial = world.market_costs()
    settlements = []
    for txn in scenario.transactions:
        expected = oracle_enumerate(world, txn) if args.oracle_check else None
        try:
            settlement = settle_one(world, txn, max_sweeps=args.max_sweeps)
        except ValueError as exc:  # bad --max-sweeps for this world size
            return _fail(2, str(exc))
        except PowerRouteError as exc:
            return _fail(3, f"txn {txn.id}: {type(exc).__name__}: {exc}")
        if expected is not None:
            problem = _oracle_mismatch(settlement, expected)
            if problem is not None:
                return _fail(3, f"txn {txn.id}: oracle check failed: {problem}")
        settlements.append(settlement)

    sys.stdout.write(render_report(settlements, world, initial))
    if args.trace is not None:
        path = args.trace or args.scenario + ".trace"
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(render_trace(settlements))
        except OSError as exc:
            return _fail(2, f"cannot write {path}: {exc.strerror}")
    if all(s.settled for s in settlements):
        return 0
    return 1


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        scenario = _load(args.scenario)
        World(scenario.markets, scenario.ties)
    except ScenarioError as exc:
        return _fail(2, str(exc))
    print(
        f"OK: {len(scenario.markets)} markets, {len(scenario.ties)} ties, "
        f"{len(scenario.transactions)} transactions"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powerroute",
        description="Route and settle inter-market power transactions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="settle every transaction in a scenario")
    run_p.add_argument("scenario", help="scenario file path")
    run_p.add_argument(
        "--trace",
        nargs="?",
        const="",
        default=None,
        metavar="PATH",
        help="write the routing trace sidecar (default PATH: <scenario>.trace)",
    )
    run_p.add_argument(
        "--max-sweeps",
        type=int,
        default=None,
        metavar="N",
        help="sweep budget per transaction (must be >= market count)",
    )
    run_p.add_argument(
        "--oracle-check",
        action="store_true",
        help="cross-check every route against exhaustive enumeration",
    )
    run_p.set_defaults(func=_cmd_run)

    val_p = sub.add_parser("validate", help="parse and validate, settle nothing")
    val_p.add_argument("scenario", help="scenario file path")
    val_p.set_defaults(func=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
