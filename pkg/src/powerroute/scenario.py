"""Line-oriented scenario files: parsing and full cross-validation.

Format, one record per line, '#' starts a comment, fields separated by
whitespace:

    market   <id> <transit_fee>
    bus      <market> <bus> <load>
    gen      <market> <bus> <id> <pmin> <pmax> <c2> <c1> <c0>
    branch   <market> <from_bus> <to_bus> <susceptance> <limit>
    boundary <market> <neighbor_market> <bus>
    tie      <market_a> <market_b> <limit> <fee>
    txn      <id> <seller_market> <seller_bus> <buyer_market> <buyer_bus> <p>

A market's sub-records must come after its market line. Tie endpoints
attach at the buses named by the two matching boundary records. The
first problem found is reported with its 1-based line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError, PowerRouteError, ValidationError
from .grid import (
    Branch,
    Bus,
    Generator,
    MarketNetwork,
    TieLine,
    validate_market_graph,
)
from .engine import Transaction

_ARITY = {
    "market": 2,
    "bus": 3,
    "gen": 8,
    "branch": 5,
    "boundary": 3,
    "tie": 4,
    "txn": 6,
}


@dataclass(frozen=True)
class Scenario:
    markets: tuple[MarketNetwork, ...]
    ties: tuple[TieLine, ...]
    transactions: tuple[Transaction, ...]
    base_power: float = 100.0


@dataclass
class _MarketDraft:
    line: int
    transit_fee: float
    buses: list[Bus] = field(default_factory=list)
    generators: list[Generator] = field(default_factory=list)
    branches: list[Branch] = field(default_factory=list)
    boundary: dict[str, int] = field(default_factory=dict)


def _int(token: str, line: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(line, f"{what} must be an integer, got {token!r}") from None


def _float(token: str, line: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(line, f"{what} must be a number, got {token!r}") from None


def parse_scenario(text: str) -> Scenario:
    drafts: dict[str, _MarketDraft] = {}
    tie_records: list[tuple[int, str, str, float, float]] = []
    txn_records: list[tuple[int, Transaction]] = []
    boundary_lines: dict[tuple[str, str], int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        fields = body.split()
        kind, args = fields[0], fields[1:]
        if kind not in _ARITY:
            raise ParseError(lineno, f"unknown record kind {kind!r}")
        if len(args) != _ARITY[kind]:
            raise ParseError(
                lineno,
                f"{kind} record needs {_ARITY[kind]} fields, got {len(args)}",
            )

        if kind == "market":
            mid = args[0]
            if mid in drafts:
                raise ValidationError(lineno, f"duplicate market {mid!r}")
            drafts[mid] = _MarketDraft(lineno, _float(args[1], lineno, "transit_fee"))
        elif kind == "bus":
            draft = _market(drafts, args[0], lineno)
            bus_id = _int(args[1], lineno, "bus id")
            if any(b.id == bus_id for b in draft.buses):
                raise ValidationError(
                    lineno, f"duplicate bus {bus_id} in market {args[0]}"
                )
            draft.buses.append(
                _build(lineno, Bus, bus_id, _float(args[2], lineno, "load"))
            )
        elif kind == "gen":
            draft = _market(drafts, args[0], lineno)
            bus_id = _int(args[1], lineno, "bus id")
            _known_bus(draft, bus_id, args[0], lineno)
            gen_id = _int(args[2], lineno, "generator id")
            if any(g.id == gen_id for g in draft.generators):
                raise ValidationError(
                    lineno, f"duplicate generator {gen_id} in market {args[0]}"
                )
            draft.generators.append(
                _build(
                    lineno, Generator, gen_id, bus_id,
                    _float(args[3], lineno, "pmin"),
                    _float(args[4], lineno, "pmax"),
                    _float(args[5], lineno, "c2"),
                    _float(args[6], lineno, "c1"),
                    _float(args[7], lineno, "c0"),
                )
            )
        elif kind == "branch":
            draft = _market(drafts, args[0], lineno)
            f_bus = _int(args[1], lineno, "from_bus")
            t_bus = _int(args[2], lineno, "to_bus")
            _known_bus(draft, f_bus, args[0], lineno)
            _known_bus(draft, t_bus, args[0], lineno)
            draft.branches.append(
                _build(
                    lineno, Branch, f_bus, t_bus,
                    _float(args[3], lineno, "susceptance"),
                    _float(args[4], lineno, "limit"),
                )
            )
        elif kind == "boundary":
            draft = _market(drafts, args[0], lineno)
            neighbor = args[1]
            bus_id = _int(args[2], lineno, "bus id")
            _known_bus(draft, bus_id, args[0], lineno)
            if neighbor in draft.boundary:
                raise ValidationError(
                    lineno,
                    f"market {args[0]} already has a boundary toward {neighbor}",
                )
            draft.boundary[neighbor] = bus_id
            boundary_lines[(args[0], neighbor)] = lineno
        elif kind == "tie":
            tie_records.append(
                (
                    lineno, args[0], args[1],
                    _float(args[2], lineno, "limit"),
                    _float(args[3], lineno, "fee"),
                )
            )
        else:
            txn_id = _int(args[0], lineno, "transaction id")
            txn_records.append(
                (
                    lineno,
                    _build(
                        lineno, Transaction, txn_id,
                        args[1], _int(args[2], lineno, "seller bus"),
                        args[3], _int(args[4], lineno, "buyer bus"),
                        _float(args[5], lineno, "p"),
                    ),
                )
            )

    if not drafts:
        raise ParseError(1, "no market records")

    markets = []
    for mid, draft in drafts.items():
        try:
            network = MarketNetwork(
                id=mid,
                transit_fee=draft.transit_fee,
                buses=tuple(draft.buses),
                generators=tuple(draft.generators),
                branches=tuple(draft.branches),
                boundary_map=dict(draft.boundary),
            )
            network.dc  # force the connectivity check here, not at first dispatch
        except (ValueError, PowerRouteError) as exc:
            raise ValidationError(draft.line, str(exc)) from None
        markets.append(network)

    ties = []
    seen_pairs: dict[frozenset, int] = {}
    for lineno, a, b, limit, fee in tie_records:
        for mid in (a, b):
            if mid not in drafts:
                raise ValidationError(lineno, f"tie references unknown market {mid!r}")
        pair = frozenset((a, b))
        if pair in seen_pairs:
            raise ValidationError(
                lineno, f"duplicate tie between {a} and {b} (first at line {seen_pairs[pair]})"
            )
        seen_pairs[pair] = lineno
        if b not in drafts[a].boundary:
            raise ValidationError(
                lineno, f"market {a} declares no boundary bus toward {b}"
            )
        if a not in drafts[b].boundary:
            raise ValidationError(
                lineno, f"market {b} declares no boundary bus toward {a}"
            )
        ties.append(
            _build(
                lineno, TieLine, a, drafts[a].boundary[b], b, drafts[b].boundary[a],
                limit, fee,
            )
        )

    for (mid, neighbor), lineno in boundary_lines.items():
        if frozenset((mid, neighbor)) not in seen_pairs:
            raise ValidationError(
                lineno, f"boundary toward {neighbor} has no matching tie record"
            )

    check = validate_market_graph(markets, ties)
    if not check.loop_free:
        cycle = check.cycles[0]
        closed = list(zip(cycle, cycle[1:])) + [(cycle[-1], cycle[0])]
        lines = [seen_pairs[frozenset(p)] for p in closed if frozenset(p) in seen_pairs]
        offending = max(lines) if lines else max(seen_pairs.values())
        raise ValidationError(offending, f"market graph has a cycle: {'-'.join(cycle)}")

    transactions = []
    last_id = None
    for lineno, txn in txn_records:
        if last_id is not None and txn.id <= last_id:
            raise ValidationError(
                lineno, f"transaction ids must be strictly increasing, got {txn.id}"
            )
        last_id = txn.id
        for market, bus, side in (
            (txn.seller_market, txn.seller_bus, "seller"),
            (txn.buyer_market, txn.buyer_bus, "buyer"),
        ):
            if market not in drafts:
                raise ValidationError(
                    lineno, f"{side} market {market!r} does not exist"
                )
            if not any(b.id == bus for b in drafts[market].buses):
                raise ValidationError(
                    lineno, f"{side} bus {bus} not in market {market}"
                )
        transactions.append(txn)

    return Scenario(tuple(markets), tuple(ties), tuple(transactions))


def _market(drafts: dict[str, _MarketDraft], mid: str, lineno: int) -> _MarketDraft:
    try:
        return drafts[mid]
    except KeyError:
        raise ValidationError(
            lineno, f"market {mid!r} not declared before this record"
        ) from None


def _known_bus(draft: _MarketDraft, bus_id: int, mid: str, lineno: int) -> None:
    if not any(b.id == bus_id for b in draft.buses):
        raise ValidationError(lineno, f"bus {bus_id} not declared in market {mid}")


def _build(lineno: int, cls, *args):
    try:
        return cls(*args)
    except ValueError as exc:
        raise ValidationError(lineno, str(exc)) from None
