"""Distributed cheapest-route discovery between markets.

Each market keeps at most one route entry per transaction: the cheapest
known way for the transaction's power to reach it from the source,
together with the full market path that achieves it. Markets advertise
their entries to neighbors; a receiver adopts an offer only when it is
strictly cheaper than what it already holds and its own id does not
appear in the offered path. Carrying the full path is what rules out
count-to-infinity loops: a stale cost can never circle back into its
own path.

Sweeps relax advertisements in declaration order until no entry moves,
which on a loop-free market graph happens within one sweep per market.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Iterator

from .errors import NonConvergence

if TYPE_CHECKING:
    from .engine import Transaction, World

logger = logging.getLogger(__name__)

# Offers within this margin of the incumbent entry are not adopted.
IMPROVE_TOL = 1e-9


class RejectReason(Enum):
    LOOP_GUARD = "loop-guard"
    NOT_CHEAPER = "not-cheaper"


class DenialReason(Enum):
    SOURCE_INFEASIBLE = "SourceInfeasible"
    TARGET_INFEASIBLE = "TargetInfeasible"
    TIE_CAPACITY = "TieCapacity"
    NO_ROUTE = "NoRoute"


@dataclass(frozen=True)
class RouteEntry:
    source: str
    distance: float
    path: tuple[str, ...]
    stale: bool = False


@dataclass(frozen=True)
class Advertisement:
    sender: str
    source: str
    offered: float
    path: tuple[str, ...]
    transaction_id: str


@dataclass(frozen=True)
class Route:
    path: tuple[str, ...]
    total_cost: float


@dataclass(frozen=True)
class Denied:
    reason: DenialReason


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    kind: str
    distances: dict[str, float]
    changed: bool


@dataclass
class ConvergenceTrace:
    market_order: tuple[str, ...]
    source: str
    rows: list[TraceRow] = field(default_factory=list)

    def final_distances(self) -> dict[str, float]:
        return self.rows[-1].distances if self.rows else {}


def evaluate_advert(agent, advert: Advertisement):
    """One market judging one offer.

    Returns (entry, None) when the offer wins and should replace the
    agent's current entry, else (None, reason). The appended path keeps
    the loop-free invariant: the receiver is never already on it.
    """
    if agent.market_id in advert.path:
        return None, RejectReason.LOOP_GUARD
    current = agent.entry.distance if agent.entry is not None else math.inf
    if not advert.offered < current - IMPROVE_TOL:
        return None, RejectReason.NOT_CHEAPER
    entry = RouteEntry(
        source=advert.source,
        distance=advert.offered,
        path=advert.path + (agent.market_id,),
    )
    assert agent.market_id not in advert.path
    return entry, None


class RoutingRun:
    """Route discovery for a single transaction across the market graph."""

    def __init__(self, world: "World", txn: "Transaction", max_sweeps: int | None = None):
        self.world = world
        self.txn = txn
        n = len(world.market_order)
        self.max_sweeps = max_sweeps if max_sweeps is not None else n + 1
        if self.max_sweeps < n:
            raise ValueError(f"max_sweeps {self.max_sweeps} below market count {n}")
        self.trace = ConvergenceTrace(market_order=world.market_order, source=txn.seller_market)
        self.capacity_blocked = False
        self.source_infeasible = False
        self._iteration = 0
        for market_id, agent in world.agents.items():
            agent.begin_transaction(txn.seller_bus if market_id == txn.seller_market else None)

    def _snapshot(self, kind: str, changed: bool) -> None:
        self._iteration += 1
        distances = {
            m: (self.world.agents[m].entry.distance if self.world.agents[m].entry else math.inf)
            for m in self.world.market_order
        }
        self.trace.rows.append(TraceRow(self._iteration, kind, distances, changed))

    def _offer(self, sender_agent, receiver_id: str, offered: float, path: tuple[str, ...]) -> bool:
        advert = Advertisement(
            sender=sender_agent.market_id,
            source=self.txn.seller_market,
            offered=offered,
            path=path,
            transaction_id=self.txn.id,
        )
        receiver = self.world.agents[receiver_id]
        entry, reject = evaluate_advert(receiver, advert)
        if entry is None:
            logger.debug(
                "txn %s: %s -> %s offer %.4f rejected (%s)",
                self.txn.id, advert.sender, receiver_id, offered,
                reject.value if reject else "?",
            )
            return False
        receiver.entry = entry
        return True

    def init_tables(self) -> None:
        """Source seeds its own zero entry and prices every first hop."""
        src = self.world.agents[self.txn.seller_market]
        src.entry = RouteEntry(self.txn.seller_market, 0.0, (self.txn.seller_market,))
        exit_deltas = []
        for neighbor in src.neighbor_ties:
            delta = src.source_delta(neighbor, self.txn.p_tr)
            exit_deltas.append(delta)
            weight = src.outbound_weight(None, neighbor, self.txn.p_tr)
            if math.isinf(weight):
                if not src.neighbor_ties[neighbor].can_carry(src.market_id, self.txn.p_tr):
                    self.capacity_blocked = True
                continue
            self._offer(src, neighbor, weight, (self.txn.seller_market,))
        if exit_deltas and all(math.isinf(d) for d in exit_deltas):
            self.source_infeasible = True
        self._snapshot("init", changed=True)

    def sweep(self) -> bool:
        """Every non-source market re-advertises its entry; returns True if any entry moved."""
        changed = False
        for market_id in self.world.market_order:
            if market_id == self.txn.seller_market:
                continue
            agent = self.world.agents[market_id]
            entry = agent.entry
            if entry is None or math.isinf(entry.distance):
                continue
            prev = entry.path[-2]
            for neighbor in agent.neighbor_ties:
                if neighbor in entry.path:
                    continue
                weight = agent.outbound_weight(prev, neighbor, self.txn.p_tr)
                if math.isinf(weight):
                    if not agent.neighbor_ties[neighbor].can_carry(agent.market_id, self.txn.p_tr):
                        self.capacity_blocked = True
                    continue
                if self._offer(agent, neighbor, entry.distance + weight, entry.path):
                    changed = True
        return changed

    def run_until_converged(self) -> ConvergenceTrace:
        self.init_tables()
        if self.source_infeasible:
            return self.trace
        self._run_sweeps()
        return self.trace

    def _run_sweeps(self) -> None:
        for _ in range(self.max_sweeps):
            changed = self.sweep()
            self._snapshot("sweep", changed)
            if not changed:
                return
        raise NonConvergence(
            f"transaction {self.txn.id}: tables still moving after "
            f"{self.max_sweeps} sweeps"
        )

    def extract_route(self) -> Route | Denied:
        """Reads the target's converged entry and prices the final absorption."""
        if self.txn.seller_market == self.txn.buyer_market:
            agent = self.world.agents[self.txn.seller_market]
            delta = agent.internal_trade_delta(
                self.txn.seller_bus, self.txn.buyer_bus, self.txn.p_tr
            )
            if math.isinf(delta):
                return Denied(DenialReason.SOURCE_INFEASIBLE)
            return Route(path=(self.txn.seller_market,), total_cost=delta)
        if self.source_infeasible:
            return Denied(DenialReason.SOURCE_INFEASIBLE)
        target = self.world.agents[self.txn.buyer_market]
        entry = target.entry
        if entry is None or math.isinf(entry.distance):
            if self.capacity_blocked:
                return Denied(DenialReason.TIE_CAPACITY)
            return Denied(DenialReason.NO_ROUTE)
        absorb = target.absorption_cost(entry.path[-2], self.txn.buyer_bus, self.txn.p_tr)
        if math.isinf(absorb):
            return Denied(DenialReason.TARGET_INFEASIBLE)
        return Route(path=entry.path, total_cost=entry.distance + absorb)

    def handle_tie_change(self, market_a: str, market_b: str) -> None:
        """Reacts to a tie between two markets changing or disappearing.

        Entries whose path crossed that tie are no longer trustworthy:
        they flush to +inf, the source re-prices its first hops, and
        sweeps run until the tables settle again.
        """
        pair = {market_a, market_b}
        for market_id in self.world.market_order:
            agent = self.world.agents[market_id]
            entry = agent.entry
            if entry is None:
                continue
            hops = zip(entry.path, entry.path[1:])
            if any({a, b} == pair for a, b in hops):
                agent.entry = replace(entry, distance=math.inf, stale=True)
        self.init_tables()
        if self.source_infeasible:
            return
        self._run_sweeps()


def _simple_paths(world: "World", start: str, goal: str) -> Iterator[tuple[str, ...]]:
    stack: list[tuple[str, tuple[str, ...]]] = [(start, (start,))]
    while stack:
        node, path = stack.pop()
        if node == goal:
            yield path
            continue
        for neighbor in reversed(list(world.agents[node].neighbor_ties)):
            if neighbor not in path:
                stack.append((neighbor, path + (neighbor,)))


def oracle_enumerate(world: "World", txn: "Transaction") -> Route | Denied:
    """Exhaustive reference: price every simple path and keep the best.

    Ties on cost break toward fewer hops, then lexicographic path order.
    Exponential in the number of markets, so only a check, never the
    protocol.
    """
    for market_id, agent in world.agents.items():
        agent.begin_transaction(txn.seller_bus if market_id == txn.seller_market else None)
    src = world.agents[txn.seller_market]
    p_tr = txn.p_tr
    if txn.seller_market == txn.buyer_market:
        delta = src.internal_trade_delta(txn.seller_bus, txn.buyer_bus, p_tr)
        if math.isinf(delta):
            return Denied(DenialReason.SOURCE_INFEASIBLE)
        return Route(path=(txn.seller_market,), total_cost=delta)
    exit_deltas = [src.source_delta(n, p_tr) for n in src.neighbor_ties]
    if exit_deltas and all(math.isinf(d) for d in exit_deltas):
        return Denied(DenialReason.SOURCE_INFEASIBLE)
    capacity_seen = False
    reached_target = False
    best: tuple[float, int, tuple[str, ...]] | None = None
    for path in _simple_paths(world, txn.seller_market, txn.buyer_market):
        cost = 0.0
        ok = True
        for i in range(len(path) - 1):
            agent = world.agents[path[i]]
            prev = path[i - 1] if i > 0 else None
            weight = agent.outbound_weight(prev, path[i + 1], p_tr)
            if math.isinf(weight):
                if not agent.neighbor_ties[path[i + 1]].can_carry(agent.market_id, p_tr):
                    capacity_seen = True
                ok = False
                break
            cost += weight
        if not ok:
            continue
        reached_target = True
        absorb = world.agents[txn.buyer_market].absorption_cost(
            path[-2], txn.buyer_bus, p_tr
        )
        if math.isinf(absorb):
            continue
        key = (cost + absorb, len(path), path)
        if best is None or key < best:
            best = key
    if best is not None:
        return Route(path=best[2], total_cost=best[0])
    if reached_target:
        return Denied(DenialReason.TARGET_INFEASIBLE)
    if capacity_seen:
        return Denied(DenialReason.TIE_CAPACITY)
    return Denied(DenialReason.NO_ROUTE)
