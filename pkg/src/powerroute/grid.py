"""Per-market grid model and DC power-flow primitives.

A regional market owns one internal transmission network. Power flow is
modeled with the lossless DC approximation: bus voltage angles solve
``B_red @ theta = P`` on the reduced nodal susceptance matrix (reference
bus row/column removed) and every branch flow is proportional to the
angle difference across it. Markets connect to their neighbors through
tie lines attached at declared boundary buses.

All model types are immutable after construction; operations are pure
functions of their inputs. Derived matrices are cached per network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import DanglingTie, DisconnectedGrid, UnbalancedInjection

BALANCE_TOL_MW = 1e-6
OVERLOAD_TOL_MW = 1e-6


@dataclass(frozen=True)
class Bus:
    """Network node with a fixed base load in MW."""

    id: int
    load: float = 0.0

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"bus id must be non-negative, got {self.id}")
        if self.load < 0:
            raise ValueError(f"bus {self.id}: load must be >= 0, got {self.load}")


@dataclass(frozen=True)
class Generator:
    """Dispatchable unit with a convex quadratic cost curve.

    Hourly cost at output p MW is ``c2*p**2 + c1*p + c0`` $/h.
    """

    id: int
    bus: int
    p_min: float
    p_max: float
    cost_c2: float
    cost_c1: float
    cost_c0: float = 0.0

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ValueError(
                f"generator {self.id}: need 0 <= p_min <= p_max, "
                f"got [{self.p_min}, {self.p_max}]"
            )
        if self.cost_c2 < 0:
            raise ValueError(f"generator {self.id}: cost_c2 must be >= 0 (convex)")

    def cost(self, p: float) -> float:
        return self.cost_c2 * p * p + self.cost_c1 * p + self.cost_c0


@dataclass(frozen=True)
class Branch:
    """Internal transmission line with susceptance (p.u.) and a MW limit."""

    from_bus: int
    to_bus: int
    susceptance: float
    limit: float

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ValueError(f"branch {self.from_bus}-{self.to_bus}: self-loop")
        if self.susceptance <= 0:
            raise ValueError(
                f"branch {self.from_bus}-{self.to_bus}: susceptance must be > 0"
            )
        if self.limit <= 0:
            raise ValueError(f"branch {self.from_bus}-{self.to_bus}: limit must be > 0")

    @property
    def name(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class TieLine:
    """Inter-market link between two boundary buses.

    ``scheduled`` is the signed MW already committed by settled
    transactions, positive in the a->b direction. Settlements replace the
    instance rather than mutating it.
    """

    market_a: str
    bus_a: int
    market_b: str
    bus_b: int
    limit: float
    fee: float
    scheduled: float = 0.0

    def __post_init__(self):
        if self.market_a == self.market_b:
            raise ValueError(f"tie {self.name}: both endpoints in one market")
        if self.limit <= 0:
            raise ValueError(f"tie {self.name}: limit must be > 0")
        if self.fee < 0:
            raise ValueError(f"tie {self.name}: fee must be >= 0")
        if abs(self.scheduled) > self.limit + 1e-9:
            raise ValueError(
                f"tie {self.name}: |scheduled| {abs(self.scheduled)} exceeds limit"
            )

    @property
    def name(self) -> str:
        return f"{self.market_a}-{self.market_b}"

    def other_market(self, market_id: str) -> str:
        if market_id == self.market_a:
            return self.market_b
        if market_id == self.market_b:
            return self.market_a
        raise ValueError(f"market {market_id} is not an endpoint of tie {self.name}")

    def signed(self, from_market: str, p_tr: float) -> float:
        """MW delta in the tie's a->b sense for p_tr sent out of from_market."""
        if from_market == self.market_a:
            return p_tr
        if from_market == self.market_b:
            return -p_tr
        raise ValueError(f"market {from_market} is not an endpoint of tie {self.name}")

    def can_carry(self, from_market: str, p_tr: float) -> bool:
        """True when residual capacity admits p_tr more MW out of from_market."""
        return abs(self.scheduled + self.signed(from_market, p_tr)) <= self.limit + 1e-9

    def with_scheduled(self, scheduled: float) -> "TieLine":
        return TieLine(
            self.market_a, self.bus_a, self.market_b, self.bus_b,
            self.limit, self.fee, scheduled,
        )


@dataclass(frozen=True)
class DcFlowSolution:
    """Angles (radians, reference bus pinned to 0) and branch flows (MW).

    ``flows`` is aligned with the network's branch tuple; positive means
    flow from ``from_bus`` to ``to_bus``.
    """

    angles: Mapping[int, float]
    flows: tuple[float, ...]


@dataclass(frozen=True)
class MarketNetwork:
    """One market's internal grid plus its boundary declarations.

    ``boundary_map`` names the internal bus where the tie to each adjacent
    market attaches. ``load_shift`` carries signed per-bus MW deltas
    accumulated by settled transactions (a shifted bus may net below
    zero, i.e. inject); ``export_obligations`` carries per-bus floors on
    summed generator output committed by settled sales.
    """

    id: str
    transit_fee: float
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    branches: tuple[Branch, ...]
    boundary_map: Mapping[str, int] = field(default_factory=dict)
    base_power: float = 100.0
    load_shift: Mapping[int, float] = field(default_factory=dict)
    export_obligations: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.buses:
            raise ValueError(f"market {self.id}: needs at least one bus")
        if self.transit_fee < 0:
            raise ValueError(f"market {self.id}: transit_fee must be >= 0")
        if self.base_power <= 0:
            raise ValueError(f"market {self.id}: base_power must be > 0")
        ids = [b.id for b in self.buses]
        known = set(ids)
        if len(ids) != len(known):
            raise ValueError(f"market {self.id}: duplicate bus ids")
        gen_ids = [g.id for g in self.generators]
        if len(gen_ids) != len(set(gen_ids)):
            raise ValueError(f"market {self.id}: duplicate generator ids")
        for g in self.generators:
            if g.bus not in known:
                raise ValueError(f"market {self.id}: generator {g.id} at unknown bus {g.bus}")
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise ValueError(f"market {self.id}: branch {br.name} references unknown bus")
        for neighbor, bus in self.boundary_map.items():
            if bus not in known:
                raise ValueError(
                    f"market {self.id}: boundary toward {neighbor} at unknown bus {bus}"
                )
        for bus in (*self.load_shift, *self.export_obligations):
            if bus not in known:
                raise ValueError(f"market {self.id}: state delta at unknown bus {bus}")
        if sum(g.p_max for g in self.generators) < sum(b.load for b in self.buses):
            raise ValueError(f"market {self.id}: total p_max below total load")

    @cached_property
    def bus_order(self) -> tuple[int, ...]:
        """Bus ids sorted ascending; index 0 is the reference bus."""
        return tuple(sorted(b.id for b in self.buses))

    @cached_property
    def bus_index(self) -> Mapping[int, int]:
        return {b: i for i, b in enumerate(self.bus_order)}

    @cached_property
    def bus_by_id(self) -> Mapping[int, Bus]:
        return {b.id: b for b in self.buses}

    @cached_property
    def gens_at(self) -> Mapping[int, tuple[Generator, ...]]:
        out: dict[int, list[Generator]] = {}
        for g in self.generators:
            out.setdefault(g.bus, []).append(g)
        return {b: tuple(gs) for b, gs in out.items()}

    def effective_load(self, bus_id: int) -> float:
        return self.bus_by_id[bus_id].load + self.load_shift.get(bus_id, 0.0)

    @property
    def total_effective_load(self) -> float:
        return sum(self.effective_load(b) for b in self.bus_order)

    def effective_load_vector(self) -> np.ndarray:
        """Loads (MW) aligned with bus_order, including settlement shifts."""
        return np.array([self.effective_load(b) for b in self.bus_order])

    def _require_connected(self) -> None:
        adjacency: dict[int, list[int]] = {b: [] for b in self.bus_order}
        for br in self.branches:
            adjacency[br.from_bus].append(br.to_bus)
            adjacency[br.to_bus].append(br.from_bus)
        seen = {self.bus_order[0]}
        frontier = [self.bus_order[0]]
        while frontier:
            nxt = []
            for b in frontier:
                for other in adjacency[b]:
                    if other not in seen:
                        seen.add(other)
                        nxt.append(other)
            frontier = nxt
        if len(seen) != len(self.bus_order):
            missing = sorted(set(self.bus_order) - seen)
            raise DisconnectedGrid(
                f"market {self.id}: buses {missing} unreachable from bus {self.bus_order[0]}"
            )

    @cached_property
    def dc(self) -> "DcData":
        """Reduced susceptance factorization and branch-flow sensitivities."""
        self._require_connected()
        order = self.bus_order
        n = len(order)
        idx = self.bus_index
        b_full = np.zeros((n, n))
        for br in self.branches:
            i, j = idx[br.from_bus], idx[br.to_bus]
            b_full[i, i] += br.susceptance
            b_full[j, j] += br.susceptance
            b_full[i, j] -= br.susceptance
            b_full[j, i] -= br.susceptance
        b_red = b_full[1:, 1:].copy()
        if n == 1:
            lu = None
            sens = np.zeros((len(self.branches), 0))
        else:
            lu = scipy.linalg.lu_factor(b_red)
            # flow_k = susceptance_k * (theta_from - theta_to); sensitivities
            # against reduced MW injections make base_power cancel.
            w = np.zeros((len(self.branches), n - 1))
            for k, br in enumerate(self.branches):
                i, j = idx[br.from_bus], idx[br.to_bus]
                if i > 0:
                    w[k, i - 1] += br.susceptance
                if j > 0:
                    w[k, j - 1] -= br.susceptance
            sens = scipy.linalg.lu_solve(lu, w.T).T
        return DcData(b_red=b_red, lu=lu, flow_sens=sens)


@dataclass(frozen=True)
class DcData:
    """Cached per-network DC quantities (not part of the public model)."""

    b_red: np.ndarray
    lu: object
    flow_sens: np.ndarray  # (n_branch, n_bus - 1), MW flow per MW injection


@dataclass(frozen=True)
class MarketGraphCheck:
    """Outcome of the market-level topology validation."""

    loop_free: bool
    cycles: tuple[tuple[str, ...], ...] = ()


def build_reduced_susceptance(network: MarketNetwork) -> np.ndarray:
    """Reduced nodal susceptance matrix over non-reference buses.

    Rows/columns follow ascending bus id with the lowest-numbered bus
    (the reference) removed. Raises DisconnectedGrid when some bus has no
    path to the reference.
    """
    network._require_connected()
    return network.dc.b_red.copy()


def solve_dc_flow(network: MarketNetwork, injections: Mapping[int, float]) -> DcFlowSolution:
    """Angles and branch flows for the given nodal injections (MW).

    Injections must balance to zero within 1e-6 MW; the reference bus
    angle is exactly 0. Flow conservation holds at every bus.
    """
    for bus in injections:
        if bus not in network.bus_index:
            raise ValueError(f"market {network.id}: injection at unknown bus {bus}")
    total = math.fsum(injections.values())
    if abs(total) > BALANCE_TOL_MW:
        raise UnbalancedInjection(
            f"market {network.id}: injections sum to {total:.3e} MW"
        )
    order = network.bus_order
    inj = np.array([injections.get(b, 0.0) for b in order])
    if len(order) == 1:
        return DcFlowSolution(angles={order[0]: 0.0}, flows=())
    dc = network.dc
    theta_red = scipy.linalg.lu_solve(dc.lu, inj[1:] / network.base_power)
    angles = {order[0]: 0.0}
    for pos, bus in enumerate(order[1:]):
        angles[bus] = float(theta_red[pos])
    flows = tuple(float(f) for f in dc.flow_sens @ inj[1:])
    return DcFlowSolution(angles=angles, flows=flows)


def check_limit_violations(
    solution: DcFlowSolution, network: MarketNetwork
) -> list[tuple[Branch, float]]:
    """Branches whose |flow| exceeds the limit by more than 1e-6 MW."""
    out = []
    for br, flow in zip(network.branches, solution.flows):
        over = abs(flow) - br.limit
        if over > OVERLOAD_TOL_MW:
            out.append((br, over))
    return out


def validate_market_graph(
    markets: Sequence[MarketNetwork], ties: Iterable[TieLine]
) -> MarketGraphCheck:
    """Checks the market-level graph (markets as vertices, ties as edges).

    Raises DanglingTie when a tie names an unknown market or attaches at
    a bus the endpoint market does not have. Returns the loop-free
    verdict with every cycle listed; parallel ties between the same pair
    count as a cycle.
    """
    by_id = {m.id: m for m in markets}
    tie_list = list(ties)
    adjacency: dict[str, list[tuple[str, int]]] = {m.id: [] for m in markets}
    for k, tie in enumerate(tie_list):
        for market_id, bus in ((tie.market_a, tie.bus_a), (tie.market_b, tie.bus_b)):
            market = by_id.get(market_id)
            if market is None:
                raise DanglingTie(f"tie {tie.name}: unknown market {market_id}")
            if bus not in market.bus_index:
                raise DanglingTie(
                    f"tie {tie.name}: market {market_id} has no bus {bus}"
                )
        adjacency[tie.market_a].append((tie.market_b, k))
        adjacency[tie.market_b].append((tie.market_a, k))

    cycles: list[tuple[str, ...]] = []
    visited: set[str] = set()
    for root in by_id:
        if root in visited:
            continue
        # Iterative DFS; a tie back to a vertex already on the path (other
        # than the tie we arrived by) closes a cycle.
        path = [root]
        on_path = {root: 0}
        visited.add(root)
        stack = [(root, -1, iter(adjacency[root]))]
        while stack:
            vertex, in_edge, neighbors = stack[-1]
            advanced = False
            for other, edge in neighbors:
                if edge == in_edge:
                    continue
                if other in on_path:
                    cycles.append(tuple(path[on_path[other]:]))
                    continue
                if other in visited:
                    continue
                visited.add(other)
                on_path[other] = len(path)
                path.append(other)
                stack.append((other, edge, iter(adjacency[other])))
                advanced = True
                break
            if not advanced:
                stack.pop()
                del on_path[path.pop()]
    return MarketGraphCheck(loop_free=not cycles, cycles=tuple(cycles))
