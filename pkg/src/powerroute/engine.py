"""Transaction engine: builds the multi-market world and settles a queue.

Transactions settle strictly first come, first served. Each one runs a
full route discovery against the current world state, then either
commits (boundary loads shift, export floors stick, tie schedules
grow) or is denied with a reason. A later transaction sees every
earlier commitment and none of any denial: failed pricing leaves no
residue because agents memoize against an unchanged base.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .agents import MarketAgent
from .dispatch import line_charge, transit_charge
from .errors import InternalMismatch
from .grid import MarketNetwork, TieLine, validate_market_graph
from .routing import ConvergenceTrace, Denied, DenialReason, Route, RoutingRun

logger = logging.getLogger(__name__)

# Independent re-sum of payment items must land this close to the
# discovered route cost.
PAYMENT_TOL = 1e-6


@dataclass(frozen=True)
class Transaction:
    id: int
    seller_market: str
    seller_bus: int
    buyer_market: str
    buyer_bus: int
    p_tr: float

    def __post_init__(self):
        if not self.p_tr > 0.0:
            raise ValueError(f"transaction {self.id}: p_tr must be positive")


@dataclass(frozen=True)
class SettlementItem:
    payee: str
    kind: str
    amount: float


@dataclass(frozen=True)
class Settlement:
    transaction: Transaction
    settled: bool
    route: tuple[str, ...]
    reason: DenialReason | None
    items: tuple[SettlementItem, ...]
    total: float
    trace: ConvergenceTrace | None
    market_costs: dict[str, float] = field(default_factory=dict)


def _tie_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


class World:
    """All market agents plus the tie lines joining them."""

    def __init__(self, networks: Sequence[MarketNetwork], ties: Sequence[TieLine]):
        check = validate_market_graph(networks, ties)
        if not check.loop_free:
            loops = "; ".join("-".join(c) for c in check.cycles)
            raise ValueError(f"market graph has cycles: {loops}")
        self.market_order: tuple[str, ...] = tuple(n.id for n in networks)
        self.ties: dict[tuple[str, str], TieLine] = {}
        neighbor_maps: dict[str, dict[str, TieLine]] = {n.id: {} for n in networks}
        for tie in ties:
            self.ties[_tie_key(tie.market_a, tie.market_b)] = tie
            neighbor_maps[tie.market_a][tie.market_b] = tie
            neighbor_maps[tie.market_b][tie.market_a] = tie
        self.agents: dict[str, MarketAgent] = {
            n.id: MarketAgent(n, neighbor_maps[n.id]) for n in networks
        }

    def market_costs(self) -> dict[str, float]:
        return {m: self.agents[m].base.total_cost for m in self.market_order}

    def snapshot(self) -> tuple:
        return (
            {m: a.snapshot() for m, a in self.agents.items()},
            dict(self.ties),
        )

    def restore(self, snap: tuple) -> None:
        agent_snaps, ties = snap
        for m, s in agent_snaps.items():
            self.agents[m].restore(s)
        self.ties = dict(ties)

    def replace_tie(self, tie: TieLine) -> None:
        """Swaps in a rebound tie and updates both endpoint agents."""
        self.ties[_tie_key(tie.market_a, tie.market_b)] = tie
        self.agents[tie.market_a].neighbor_ties[tie.market_b] = tie
        self.agents[tie.market_b].neighbor_ties[tie.market_a] = tie

    def remove_tie(self, market_a: str, market_b: str) -> TieLine:
        """Detaches a tie from the graph and both endpoint agents."""
        tie = self.ties.pop(_tie_key(market_a, market_b))
        del self.agents[tie.market_a].neighbor_ties[tie.market_b]
        del self.agents[tie.market_b].neighbor_ties[tie.market_a]
        return tie


def _check_transaction(world: World, txn: Transaction) -> None:
    for market, bus, side in (
        (txn.seller_market, txn.seller_bus, "seller"),
        (txn.buyer_market, txn.buyer_bus, "buyer"),
    ):
        agent = world.agents.get(market)
        if agent is None:
            raise ValueError(f"transaction {txn.id}: unknown {side} market {market!r}")
        if bus not in agent.network.bus_by_id:
            raise ValueError(
                f"transaction {txn.id}: {side} bus {bus} not in market {market}"
            )


def _settle_internal(world: World, txn: Transaction) -> Settlement:
    agent = world.agents[txn.seller_market]
    snap = world.snapshot()
    delta = agent.internal_trade_delta(txn.seller_bus, txn.buyer_bus, txn.p_tr)
    if math.isinf(delta):
        world.restore(snap)
        return Settlement(
            txn, False, (), DenialReason.SOURCE_INFEASIBLE, (), math.nan,
            None, world.market_costs(),
        )
    mod = agent.internal_trade_mod(txn.seller_bus, txn.buyer_bus, txn.p_tr)
    agent.commit_settlement(mod, {}, agent.settle_seq)
    items = (SettlementItem(txn.seller_market, "source_delta", delta),)
    return Settlement(
        txn, True, (txn.seller_market,), None, items, delta, None,
        world.market_costs(),
    )


def settle_one(
    world: World,
    txn: Transaction,
    max_sweeps: int | None = None,
) -> Settlement:
    """Routes and, if possible, commits a single transaction."""
    _check_transaction(world, txn)
    if txn.seller_market == txn.buyer_market:
        return _settle_internal(world, txn)

    snap = world.snapshot()
    run = RoutingRun(world, txn, max_sweeps)
    trace = run.run_until_converged()
    outcome = run.extract_route()
    if isinstance(outcome, Denied):
        logger.info("txn %s denied: %s", txn.id, outcome.reason.value)
        world.restore(snap)
        return Settlement(
            txn, False, (), outcome.reason, (), math.nan, trace,
            world.market_costs(),
        )

    path = outcome.path
    items: list[SettlementItem] = []
    mods = {}
    for i, market in enumerate(path):
        agent = world.agents[market]
        prev = path[i - 1] if i > 0 else None
        nxt = path[i + 1] if i < len(path) - 1 else None
        if prev is None:
            mod = agent.source_mod(nxt, txn.p_tr)
            items.append(SettlementItem(market, "source_delta", agent.price_delta(mod)))
            tie = agent.neighbor_ties[nxt]
            items.append(SettlementItem(tie.name, "line", line_charge(tie, txn.p_tr)))
        elif nxt is not None:
            mod = agent.transit_mod(prev, nxt, txn.p_tr)
            items.append(
                SettlementItem(market, "transit", transit_charge(agent.network, txn.p_tr))
            )
            items.append(SettlementItem(market, "congestion", agent.price_delta(mod)))
            tie = agent.neighbor_ties[nxt]
            items.append(SettlementItem(tie.name, "line", line_charge(tie, txn.p_tr)))
        else:
            mod = agent.target_mod(prev, txn.buyer_bus, txn.p_tr)
            items.append(SettlementItem(market, "target_delta", agent.price_delta(mod)))
        mods[market] = mod

    total = math.fsum(item.amount for item in items)
    if abs(total - outcome.total_cost) > PAYMENT_TOL:
        raise InternalMismatch(
            f"transaction {txn.id}: payment items sum to {total!r} but the "
            f"discovered route costs {outcome.total_cost!r}"
        )

    expected = {m: world.agents[m].settle_seq for m in path}
    try:
        rebinds: dict[str, dict[str, TieLine]] = {m: {} for m in path}
        for a, b in zip(path, path[1:]):
            tie = world.ties[_tie_key(a, b)]
            new_tie = tie.with_scheduled(tie.scheduled + tie.signed(a, txn.p_tr))
            world.replace_tie(new_tie)
            rebinds[a][b] = new_tie
            rebinds[b][a] = new_tie
        for market in path:
            world.agents[market].commit_settlement(
                mods[market], rebinds[market], expected[market]
            )
    except Exception:
        world.restore(snap)
        raise

    return Settlement(
        txn, True, path, None, tuple(items), total, trace, world.market_costs(),
    )


def process_queue(
    world: World,
    transactions: Iterable[Transaction],
    max_sweeps: int | None = None,
) -> list[Settlement]:
    """Settles transactions in arrival order; earlier outcomes bind later ones."""
    return [settle_one(world, txn, max_sweeps) for txn in transactions]
