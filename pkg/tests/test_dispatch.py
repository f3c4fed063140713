"""Dispatch pricing: base/modified solves, fees, oracle agreement."""

from __future__ import annotations

import math

import pytest

from powerroute.dispatch import (
    BoundaryModification,
    Role,
    congestion_fee,
    line_charge,
    role_delta,
    solve_base_dispatch,
    solve_with_transaction,
    transit_charge,
)
from powerroute.grid import (
    Branch,
    Bus,
    Generator,
    MarketNetwork,
    TieLine,
    check_limit_violations,
)

from tests.instances import fixed_3bus_instances
from tests.oracles import oracle_dispatch_grid


def one_gen_market(c1: float = 2.0, load: float = 50.0, p_max: float = 200.0) -> MarketNetwork:
    return MarketNetwork(
        id="A", transit_fee=1.0,
        buses=(Bus(1, load), Bus(2, 0.0)),
        generators=(Generator(1, 1, 0.0, p_max, 0.0, c1),),
        branches=(Branch(1, 2, 10.0, 500.0),),
        boundary_map={"B": 2},
    )


def two_gen_market(limit_12: float = 500.0) -> MarketNetwork:
    """Cheap unit at bus 1, pricey at bus 2, all load at bus 2."""
    return MarketNetwork(
        id="A", transit_fee=1.0,
        buses=(Bus(1, 0.0), Bus(2, 100.0)),
        generators=(
            Generator(1, 1, 0.0, 200.0, 0.0, 1.0),
            Generator(2, 2, 0.0, 200.0, 0.0, 5.0),
        ),
        branches=(Branch(1, 2, 10.0, limit_12),),
        boundary_map={"B": 1, "C": 2},
    )


# --- base dispatch -------------------------------------------------------


def test_single_generator_covers_load() -> None:
    result = solve_base_dispatch(one_gen_market(c1=2.0, load=50.0))
    assert result.feasible
    assert result.outputs[1] == pytest.approx(50.0, abs=1e-8)
    assert result.total_cost == pytest.approx(100.0, abs=1e-8)
    assert result.binding_branches == ()


def test_merit_order_cheap_unit_takes_all() -> None:
    net = MarketNetwork(
        id="A", transit_fee=1.0,
        buses=(Bus(1, 80.0),),
        generators=(
            Generator(1, 1, 0.0, 100.0, 0.0, 1.0),
            Generator(2, 1, 0.0, 100.0, 0.0, 3.0),
        ),
        branches=(),
    )
    result = solve_base_dispatch(net)
    assert result.outputs[1] == pytest.approx(80.0, abs=1e-8)
    assert result.outputs[2] == pytest.approx(0.0, abs=1e-8)
    assert result.total_cost == pytest.approx(80.0, abs=1e-8)


def test_branch_limit_forces_expensive_unit() -> None:
    # All 100 MW of load at bus 2 but the 1-2 line carries at most 60:
    # the cheap unit is capped at 60, the local unit covers 40.
    result = solve_base_dispatch(two_gen_market(limit_12=60.0))
    assert result.feasible
    assert result.outputs[1] == pytest.approx(60.0, abs=1e-7)
    assert result.outputs[2] == pytest.approx(40.0, abs=1e-7)
    assert result.total_cost == pytest.approx(260.0, abs=1e-6)
    assert [br.name for br in result.binding_branches] == ["1-2"]


def test_flow_solution_respects_limits() -> None:
    result = solve_base_dispatch(two_gen_market(limit_12=60.0))
    assert check_limit_violations(result.flow_solution, two_gen_market(60.0)) == []


def test_infeasible_is_a_value() -> None:
    net = MarketNetwork(
        id="A", transit_fee=1.0,
        buses=(Bus(1, 0.0), Bus(2, 100.0)),
        generators=(Generator(1, 1, 0.0, 200.0, 0.0, 1.0),),
        branches=(Branch(1, 2, 10.0, 50.0),),  # load needs 100 through a 50 MW line
    )
    result = solve_base_dispatch(net)
    assert not result.feasible
    assert math.isnan(result.total_cost)
    assert result.outputs == {}


# --- boundary modifications ----------------------------------------------


def test_zero_power_modification_equals_base() -> None:
    net = two_gen_market()
    base = solve_base_dispatch(net)
    mod = BoundaryModification(Role.INTERMEDIATE, 0.0, in_bus=1, out_bus=2)
    modified = solve_with_transaction(net, mod)
    assert modified.total_cost == pytest.approx(base.total_cost, abs=1e-6)
    for gid, p in base.outputs.items():
        assert modified.outputs[gid] == pytest.approx(p, abs=1e-6)


def test_uncongested_transit_costs_nothing() -> None:
    net = two_gen_market(limit_12=500.0)
    base = solve_base_dispatch(net)
    mod = BoundaryModification(Role.INTERMEDIATE, 30.0, in_bus=1, out_bus=2)
    assert congestion_fee(net, mod, base) == pytest.approx(0.0, abs=1e-9)


def test_congested_transit_charges_redispatch() -> None:
    # Transit 1->2 on top of the already-binding 60 MW line pushes the
    # cheap unit down MW-for-MW: fee = 30 * (5 - 1) = 120 $/h by hand.
    net = two_gen_market(limit_12=60.0)
    base = solve_base_dispatch(net)
    mod = BoundaryModification(Role.INTERMEDIATE, 30.0, in_bus=1, out_bus=2)
    fee = congestion_fee(net, mod, base)
    assert fee == pytest.approx(120.0, abs=1e-6)


def test_congestion_fee_can_be_negative() -> None:
    # Transit entering at the load side and leaving at the cheap side
    # relieves the congested line; the fee is a signed credit.
    net = two_gen_market(limit_12=60.0)
    base = solve_base_dispatch(net)
    mod = BoundaryModification(Role.INTERMEDIATE, 30.0, in_bus=2, out_bus=1)
    fee = congestion_fee(net, mod, base)
    assert fee == pytest.approx(-120.0, abs=1e-6)


def test_source_delta_linear_cost_closed_form() -> None:
    net = one_gen_market(c1=2.0, load=50.0)
    base = solve_base_dispatch(net)
    mod = BoundaryModification(Role.SOURCE, 25.0, out_bus=2, seller_bus=1)
    assert role_delta(net, mod, base) == pytest.approx(2.0 * 25.0, abs=1e-8)


def test_source_infeasible_when_seller_too_small() -> None:
    net = one_gen_market(c1=2.0, load=50.0, p_max=60.0)
    base = solve_base_dispatch(net)
    mod = BoundaryModification(Role.SOURCE, 25.0, out_bus=2, seller_bus=1)
    assert role_delta(net, mod, base) == math.inf


def test_target_absorption_uncongested_is_free() -> None:
    net = two_gen_market(limit_12=500.0)
    base = solve_base_dispatch(net)
    mod = BoundaryModification(Role.TARGET, 40.0, in_bus=1, buyer_bus=2)
    assert role_delta(net, mod, base) == pytest.approx(0.0, abs=1e-9)


def test_role_field_validation() -> None:
    with pytest.raises(ValueError):
        BoundaryModification(Role.SOURCE, 10.0, in_bus=1, out_bus=2, seller_bus=1)
    with pytest.raises(ValueError):
        BoundaryModification(Role.INTERMEDIATE, 10.0, in_bus=1)
    with pytest.raises(ValueError):
        BoundaryModification(Role.TARGET, 10.0, in_bus=1)
    with pytest.raises(ValueError):
        BoundaryModification(Role.SOURCE, -1.0, out_bus=2, seller_bus=1)
    net = two_gen_market()
    base = solve_base_dispatch(net)
    with pytest.raises(ValueError):
        congestion_fee(net, BoundaryModification(Role.SOURCE, 1.0, out_bus=2, seller_bus=1), base)
    with pytest.raises(ValueError):
        role_delta(net, BoundaryModification(Role.INTERMEDIATE, 1.0, in_bus=1, out_bus=2), base)


# --- simple charges -------------------------------------------------------


def test_transit_and_line_charges() -> None:
    net = one_gen_market()
    assert transit_charge(net, 100.0) == pytest.approx(100.0)
    tie = TieLine("A", 2, "B", 1, limit=200.0, fee=1.5)
    assert line_charge(tie, 100.0) == pytest.approx(150.0)
    assert transit_charge(net, 0.0) == 0.0


# --- oracle agreement -----------------------------------------------------


def test_tight_branch_case_matches_grid_oracle() -> None:
    net = two_gen_market(limit_12=60.0)
    result = solve_base_dispatch(net)
    oracle = oracle_dispatch_grid(net)
    assert oracle is not None
    assert result.total_cost <= oracle[0] + 1e-4
    assert result.total_cost >= oracle[0] - 0.5


def test_fixed_instances_match_grid_oracle() -> None:
    for net, mod in fixed_3bus_instances():
        result = solve_with_transaction(net, mod) if mod else solve_base_dispatch(net)
        oracle = oracle_dispatch_grid(net, mod)
        if oracle is None:
            assert not result.feasible
            continue
        assert result.feasible, f"{net.id}: solver infeasible but oracle found {oracle[0]:.2f}"
        assert result.total_cost <= oracle[0] + 1e-4, net.id
        assert result.total_cost >= oracle[0] - 0.5, net.id
        # feasibility invariants at the stated tolerances
        total_out = sum(result.outputs.values())
        expected_total = net.effective_load_vector().sum() + (
            mod.p_tr if mod and mod.role is Role.SOURCE else 0.0
        )
        assert total_out == pytest.approx(expected_total, abs=1e-6)
        assert check_limit_violations(result.flow_solution, net) == []


def test_congestion_monotone_under_tightening() -> None:
    # Base stays unconstrained across the whole range, so the fee grows
    # as the line gets tighter.
    fees = []
    for limit in (90.0, 75.0, 60.0, 45.0):
        net = two_gen_market(limit_12=limit)
        base = solve_base_dispatch(net)
        mod = BoundaryModification(Role.INTERMEDIATE, 30.0, in_bus=1, out_bus=2)
        fees.append(congestion_fee(net, mod, base))
    assert fees == sorted(fees)
    assert fees[0] >= 0.0
