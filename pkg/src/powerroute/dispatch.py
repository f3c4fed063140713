"""DC optimal dispatch per market and transaction traversal pricing.

A market prices a transaction by re-solving its own economic dispatch
with the transaction's boundary effects applied and charging the cost
difference. The three roles edit the network differently:

* Source: generators at the seller bus must cover the sold power on top
  of whatever else they do, and the sold MW leave through the outbound
  bus (for an internal trade the "outbound" bus is the buyer bus).
* Intermediate: the transaction enters at the inbound boundary bus
  (load falls by p_tr) and leaves at the outbound one (load rises).
* Target: power enters at the inbound boundary bus and is consumed at
  the buyer bus.

Dispatch minimizes total quadratic generator cost subject to energy
balance, generator bounds, committed export floors, and branch limits
via the cached flow sensitivities. Infeasibility is a value, not an
error: results carry a flag and fee helpers map it to +inf so the
routing layer can treat the edge as unusable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import kernels
from .errors import PowerRouteError
from .grid import Branch, DcFlowSolution, MarketNetwork, TieLine, solve_dc_flow

BINDING_TOL_MW = 1e-6


class Role(enum.Enum):
    SOURCE = "Source"
    INTERMEDIATE = "Intermediate"
    TARGET = "Target"


@dataclass(frozen=True)
class BoundaryModification:
    """Boundary effects of one transaction on one market's dispatch."""

    role: Role
    p_tr: float
    in_bus: int | None = None
    out_bus: int | None = None
    seller_bus: int | None = None
    buyer_bus: int | None = None

    def __post_init__(self):
        if self.p_tr < 0:
            raise ValueError("p_tr must be >= 0")
        checks = {
            Role.SOURCE: (self.in_bus is None and self.out_bus is not None
                          and self.seller_bus is not None and self.buyer_bus is None),
            Role.INTERMEDIATE: (self.in_bus is not None and self.out_bus is not None
                                and self.seller_bus is None and self.buyer_bus is None),
            Role.TARGET: (self.in_bus is not None and self.out_bus is None
                          and self.seller_bus is None and self.buyer_bus is not None),
        }
        if not checks[self.role]:
            raise ValueError(f"{self.role.value} modification has wrong bus fields")


@dataclass(frozen=True)
class DispatchResult:
    """Optimal dispatch outcome; total_cost is NaN when infeasible."""

    outputs: Mapping[int, float]
    total_cost: float
    flow_solution: DcFlowSolution | None
    binding_branches: tuple[Branch, ...]
    feasible: bool


def _effective_loads(network: MarketNetwork, mod: BoundaryModification | None) -> np.ndarray:
    loads = network.effective_load_vector()
    if mod is not None and mod.p_tr:
        idx = network.bus_index
        if mod.role is Role.SOURCE:
            loads[idx[mod.out_bus]] += mod.p_tr
        elif mod.role is Role.INTERMEDIATE:
            loads[idx[mod.in_bus]] -= mod.p_tr
            loads[idx[mod.out_bus]] += mod.p_tr
        else:
            loads[idx[mod.in_bus]] -= mod.p_tr
            loads[idx[mod.buyer_bus]] += mod.p_tr
    return loads


def _floors(network: MarketNetwork, mod: BoundaryModification | None) -> dict[int, float]:
    floors = dict(network.export_obligations)
    if mod is not None and mod.role is Role.SOURCE and mod.p_tr:
        floors[mod.seller_bus] = floors.get(mod.seller_bus, 0.0) + mod.p_tr
    return {b: f for b, f in floors.items() if f > 0.0}


def _infeasible() -> DispatchResult:
    return DispatchResult(
        outputs={}, total_cost=math.nan, flow_solution=None,
        binding_branches=(), feasible=False,
    )


def _solve(network: MarketNetwork, mod: BoundaryModification | None) -> DispatchResult:
    loads = _effective_loads(network, mod)
    floors = _floors(network, mod)
    gens = network.generators
    n_gen = len(gens)
    total_load = float(loads.sum())

    if n_gen == 0:
        if abs(total_load) > 1e-6:
            return _infeasible()
        result = _finish(network, mod, np.zeros(0), loads)
        # No dispatch freedom: fixed flows must respect limits on their own.
        if any(abs(f) > br.limit + BINDING_TOL_MW
               for br, f in zip(network.branches, result.flow_solution.flows)):
            return _infeasible()
        return result

    for bus, floor in floors.items():
        if sum(g.p_max for g in network.gens_at.get(bus, ())) < floor - 1e-9:
            return _infeasible()

    h = np.diag([2.0 * g.cost_c2 for g in gens])
    lin = np.array([g.cost_c1 for g in gens])
    a_eq = np.ones((1, n_gen))
    b_eq = np.array([total_load])

    rows = [np.eye(n_gen), -np.eye(n_gen)]
    rhs = [np.array([g.p_max for g in gens]), np.array([-g.p_min for g in gens])]
    for bus, floor in sorted(floors.items()):
        row = np.array([[-1.0 if g.bus == bus else 0.0 for g in gens]])
        rows.append(row)
        rhs.append(np.array([-floor]))
    if network.branches and len(network.bus_order) > 1:
        sens = network.dc.flow_sens
        m_red = np.zeros((len(network.bus_order) - 1, n_gen))
        idx = network.bus_index
        for k, g in enumerate(gens):
            pos = idx[g.bus]
            if pos > 0:
                m_red[pos - 1, k] = 1.0
        a_flow = sens @ m_red
        offset = -(sens @ loads[1:])
        limits = np.array([br.limit for br in network.branches])
        rows.append(a_flow)
        rhs.append(limits - offset)
        rows.append(-a_flow)
        rhs.append(limits + offset)
    a_ub = np.vstack(rows)
    b_ub = np.concatenate(rhs)

    status, x, _ = kernels.solve_qp(h, lin, a_eq, b_eq, a_ub, b_ub)
    if status == kernels.INFEASIBLE:
        return _infeasible()
    if status != kernels.OPTIMAL:
        raise PowerRouteError(
            f"market {network.id}: dispatch solver returned status {status}"
        )
    return _finish(network, mod, x, loads)


def _finish(
    network: MarketNetwork,
    mod: BoundaryModification | None,
    x: np.ndarray,
    loads: np.ndarray,
) -> DispatchResult:
    outputs = {g.id: float(p) for g, p in zip(network.generators, x)}
    total_cost = math.fsum(g.cost(outputs[g.id]) for g in network.generators)
    injections = dict(zip(network.bus_order, -loads))
    for g, p in zip(network.generators, x):
        injections[g.bus] += float(p)
    # Tiny solver slack can leave the sum a hair off; rebalance at the
    # reference bus so the flow solve's own balance check stays honest.
    residual = math.fsum(injections.values())
    injections[network.bus_order[0]] -= residual
    flow = solve_dc_flow(network, injections)
    binding = tuple(
        br for br, f in zip(network.branches, flow.flows)
        if abs(f) >= br.limit - BINDING_TOL_MW
    )
    return DispatchResult(
        outputs=outputs, total_cost=total_cost, flow_solution=flow,
        binding_branches=binding, feasible=True,
    )


def solve_base_dispatch(network: MarketNetwork) -> DispatchResult:
    """Minimum-cost dispatch of the market as it currently stands."""
    return _solve(network, None)


def solve_with_transaction(
    network: MarketNetwork, mod: BoundaryModification
) -> DispatchResult:
    """Minimum-cost dispatch with the transaction's boundary effects."""
    return _solve(network, mod)


def congestion_fee(
    network: MarketNetwork, mod: BoundaryModification, base: DispatchResult
) -> float:
    """Extra generation cost a pass-through market incurs, in $/h.

    Signed: negative when the transit relieves existing congestion.
    +inf when the transit dispatch is infeasible.
    """
    if mod.role is not Role.INTERMEDIATE:
        raise ValueError("congestion_fee prices pass-through traversal")
    if not base.feasible:
        return math.inf
    modified = solve_with_transaction(network, mod)
    if not modified.feasible:
        return math.inf
    return modified.total_cost - base.total_cost


def transit_charge(network: MarketNetwork, p_tr: float) -> float:
    """Usage fee a pass-through market charges: transit_fee * p_tr."""
    return network.transit_fee * p_tr


def line_charge(tie: TieLine, p_tr: float) -> float:
    """Tie usage fee: tie.fee * p_tr."""
    return tie.fee * p_tr


def role_delta(
    network: MarketNetwork, mod: BoundaryModification, base: DispatchResult
) -> float:
    """Re-dispatch cost delta for a source or target market, in $/h.

    +inf when the modified dispatch is infeasible.
    """
    if mod.role is Role.INTERMEDIATE:
        raise ValueError("role_delta prices source/target re-dispatch")
    if not base.feasible:
        return math.inf
    modified = solve_with_transaction(network, mod)
    if not modified.feasible:
        return math.inf
    return modified.total_cost - base.total_cost
