"""Market agents: each market's local view of pricing and settlement.

An agent owns exactly one market network, its current base dispatch, and
the tie lines it touches. Every price it quotes comes from re-solving
its own dispatch; it learns about the rest of the system only through
received advertisements. Weight queries are memoized until a settlement
commits, which permanently folds the transaction into the network state.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import TYPE_CHECKING, Mapping

from .dispatch import (
    BoundaryModification,
    DispatchResult,
    Role,
    line_charge,
    solve_base_dispatch,
    solve_with_transaction,
    transit_charge,
)
from .errors import StaleState, UnknownNeighbor
from .grid import MarketNetwork, TieLine

if TYPE_CHECKING:
    from .routing import RouteEntry


class MarketAgent:
    """One market's routing participant."""

    def __init__(self, network: MarketNetwork, neighbor_ties: Mapping[str, TieLine]):
        if set(network.boundary_map) != set(neighbor_ties):
            raise ValueError(
                f"market {network.id}: boundary buses declared for "
                f"{sorted(network.boundary_map)} but ties connect {sorted(neighbor_ties)}"
            )
        self.network = network
        self.neighbor_ties: dict[str, TieLine] = dict(neighbor_ties)
        self.base: DispatchResult = solve_base_dispatch(network)
        self.settle_seq = 0
        self.entry: "RouteEntry | None" = None
        self._seller_bus: int | None = None
        self._dispatch_cache: dict[tuple, DispatchResult] = {}

    @property
    def market_id(self) -> str:
        return self.network.id

    def begin_transaction(self, seller_bus: int | None) -> None:
        """Resets route state for a new transaction's pricing round."""
        self.entry = None
        self._seller_bus = seller_bus

    # --- local pricing ----------------------------------------------------

    def _solve(self, mod: BoundaryModification) -> DispatchResult:
        key = (mod.role, mod.p_tr, mod.in_bus, mod.out_bus, mod.seller_bus, mod.buyer_bus)
        hit = self._dispatch_cache.get(key)
        if hit is None:
            hit = solve_with_transaction(self.network, mod)
            self._dispatch_cache[key] = hit
        return hit

    def price_delta(self, mod: BoundaryModification) -> float:
        """Re-dispatch cost of a boundary modification; +inf if infeasible."""
        if not self.base.feasible:
            return math.inf
        result = self._solve(mod)
        if not result.feasible:
            return math.inf
        return result.total_cost - self.base.total_cost

    def _boundary_bus(self, neighbor: str) -> int:
        try:
            return self.network.boundary_map[neighbor]
        except KeyError:
            raise UnknownNeighbor(
                f"market {self.market_id} has no tie to {neighbor!r}"
            ) from None

    def source_mod(self, next_neighbor: str, p_tr: float) -> BoundaryModification:
        return BoundaryModification(
            Role.SOURCE, p_tr,
            out_bus=self._boundary_bus(next_neighbor),
            seller_bus=self._seller_bus,
        )

    def transit_mod(self, prev_neighbor: str, next_neighbor: str, p_tr: float) -> BoundaryModification:
        return BoundaryModification(
            Role.INTERMEDIATE, p_tr,
            in_bus=self._boundary_bus(prev_neighbor),
            out_bus=self._boundary_bus(next_neighbor),
        )

    def target_mod(self, prev_neighbor: str, buyer_bus: int, p_tr: float) -> BoundaryModification:
        return BoundaryModification(
            Role.TARGET, p_tr,
            in_bus=self._boundary_bus(prev_neighbor),
            buyer_bus=buyer_bus,
        )

    def source_delta(self, next_neighbor: str, p_tr: float) -> float:
        """Re-dispatch cost of exporting p_tr toward a neighbor; +inf if infeasible."""
        return self.price_delta(self.source_mod(next_neighbor, p_tr))

    def outbound_weight(
        self, prev_neighbor: str | None, next_neighbor: str, p_tr: float
    ) -> float:
        """Cost this market adds when the transaction leaves toward next_neighbor.

        For the source (prev_neighbor None): export re-dispatch plus the
        outbound tie fee. For pass-through: transit fee plus congestion
        fee plus the outbound tie fee. +inf when the dispatch is
        infeasible or the outbound tie lacks residual capacity.
        """
        tie = self.neighbor_ties.get(next_neighbor)
        if tie is None:
            raise UnknownNeighbor(
                f"market {self.market_id} has no tie to {next_neighbor!r}"
            )
        if not tie.can_carry(self.market_id, p_tr):
            return math.inf
        if prev_neighbor is None:
            delta = self.source_delta(next_neighbor, p_tr)
        else:
            delta = transit_charge(self.network, p_tr) + self.price_delta(
                self.transit_mod(prev_neighbor, next_neighbor, p_tr)
            )
        return delta + line_charge(tie, p_tr)

    def absorption_cost(self, prev_neighbor: str, buyer_bus: int, p_tr: float) -> float:
        """Target-side re-dispatch cost of consuming p_tr at the buyer bus."""
        return self.price_delta(self.target_mod(prev_neighbor, buyer_bus, p_tr))

    def internal_trade_mod(self, seller_bus: int, buyer_bus: int, p_tr: float) -> BoundaryModification:
        """Seller and buyer inside this market: priced as an export to the buyer bus."""
        return BoundaryModification(
            Role.SOURCE, p_tr, out_bus=buyer_bus, seller_bus=seller_bus
        )

    def internal_trade_delta(self, seller_bus: int, buyer_bus: int, p_tr: float) -> float:
        return self.price_delta(self.internal_trade_mod(seller_bus, buyer_bus, p_tr))

    def dispatch_for(self, mod: BoundaryModification) -> DispatchResult:
        """The cached with-transaction dispatch used for pricing this mod."""
        return self._solve(mod)

    # --- settlement --------------------------------------------------------

    def commit_settlement(
        self,
        mod: BoundaryModification,
        tie_rebinds: Mapping[str, TieLine],
        expected_seq: int,
    ) -> None:
        """Makes the priced modification permanent.

        The with-transaction dispatch becomes the new base, boundary load
        edits fold into the network's load_shift, a source's sold MW
        become a lasting export floor, and rebound tie lines replace the
        agent's copies. Raises StaleState when the base advanced since
        the caller priced.
        """
        if expected_seq != self.settle_seq:
            raise StaleState(
                f"market {self.market_id}: priced at settlement {expected_seq}, "
                f"now at {self.settle_seq}"
            )
        result = self._solve(mod)
        if not result.feasible:
            raise StaleState(
                f"market {self.market_id}: committed modification is infeasible"
            )
        shift = dict(self.network.load_shift)
        obligations = dict(self.network.export_obligations)
        if mod.role is Role.SOURCE:
            shift[mod.out_bus] = shift.get(mod.out_bus, 0.0) + mod.p_tr
            obligations[mod.seller_bus] = obligations.get(mod.seller_bus, 0.0) + mod.p_tr
        elif mod.role is Role.INTERMEDIATE:
            shift[mod.in_bus] = shift.get(mod.in_bus, 0.0) - mod.p_tr
            shift[mod.out_bus] = shift.get(mod.out_bus, 0.0) + mod.p_tr
        else:
            shift[mod.in_bus] = shift.get(mod.in_bus, 0.0) - mod.p_tr
            shift[mod.buyer_bus] = shift.get(mod.buyer_bus, 0.0) + mod.p_tr
        self.network = replace(
            self.network, load_shift=shift, export_obligations=obligations
        )
        self.base = result
        self.neighbor_ties.update(tie_rebinds)
        self._dispatch_cache.clear()
        self.settle_seq += 1

    def snapshot(self) -> tuple:
        return (self.network, self.base, dict(self.neighbor_ties), self.settle_seq)

    def restore(self, snap: tuple) -> None:
        self.network, self.base, ties, self.settle_seq = snap
        self.neighbor_ties = dict(ties)
        self._dispatch_cache.clear()
