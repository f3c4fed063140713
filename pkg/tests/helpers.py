"""Shared builders for small test networks and worlds."""

from __future__ import annotations

from powerroute.engine import World
from powerroute.grid import Branch, Bus, Generator, MarketNetwork, TieLine


def single_bus_market(market_id: str = "A") -> MarketNetwork:
    return MarketNetwork(
        id=market_id,
        transit_fee=1.0,
        buses=(Bus(1, 0.0),),
        generators=(),
        branches=(),
    )


def two_bus_market(
    market_id: str = "A",
    susceptance: float = 10.0,
    limit: float = 100.0,
    load: float = 0.0,
) -> MarketNetwork:
    return MarketNetwork(
        id=market_id,
        transit_fee=1.0,
        buses=(Bus(1, 0.0), Bus(2, load)),
        generators=(Generator(1, 1, 0.0, max(load, 1.0) * 2, 0.0, 1.0),),
        branches=(Branch(1, 2, susceptance, limit),),
    )


def triangle_market(
    market_id: str = "A",
    susceptance: float = 5.0,
    limit: float = 200.0,
) -> MarketNetwork:
    """Three buses fully meshed with equal susceptances, no load."""
    return MarketNetwork(
        id=market_id,
        transit_fee=1.0,
        buses=(Bus(1, 0.0), Bus(2, 0.0), Bus(3, 0.0)),
        generators=(Generator(1, 1, 0.0, 500.0, 0.0, 1.0),),
        branches=(
            Branch(1, 2, susceptance, limit),
            Branch(1, 3, susceptance, limit),
            Branch(2, 3, susceptance, limit),
        ),
    )


def quad_market(
    market_id: str,
    neighbors: tuple[str, ...],
    c2: float = 0.01,
    c1: float = 10.0,
    load: float = 100.0,
    transit_fee: float = 1.0,
    p_max: float = 1000.0,
) -> MarketNetwork:
    """One bus, one quadratic generator; every boundary attaches to bus 1.

    Cost deltas are hand-computable: exporting p against load L costs
    c2*p*(2L + p) + c1*p extra.
    """
    return MarketNetwork(
        id=market_id,
        transit_fee=transit_fee,
        buses=(Bus(1, load),),
        generators=(Generator(1, 1, 0.0, p_max, c2, c1, 0.0),),
        branches=(),
        boundary_map={n: 1 for n in neighbors},
    )


def quad_delta(c2: float, c1: float, load: float, p: float) -> float:
    """Closed-form re-dispatch delta for a quad_market absorbing +p MW."""
    return c2 * p * (2.0 * load + p) + c1 * p


def simple_tie(a: str, b: str, limit: float = 1000.0, fee: float = 1.0,
               scheduled: float = 0.0) -> TieLine:
    return TieLine(a, 1, b, 1, limit, fee, scheduled)


def chain_world(
    ids: str = "ABCD",
    tie_fee: float = 1.0,
    tie_limit: float = 1000.0,
    transit_fee: float = 1.0,
    loads: tuple[float, ...] | None = None,
) -> World:
    """Markets in a line, each a quad_market, ties between neighbors."""
    loads = loads or tuple(100.0 for _ in ids)
    nets = []
    for i, mid in enumerate(ids):
        neighbors = tuple(
            ids[j] for j in (i - 1, i + 1) if 0 <= j < len(ids)
        )
        nets.append(
            quad_market(mid, neighbors, load=loads[i], transit_fee=transit_fee)
        )
    ties = [
        simple_tie(ids[i], ids[i + 1], limit=tie_limit, fee=tie_fee)
        for i in range(len(ids) - 1)
    ]
    return World(nets, ties)
