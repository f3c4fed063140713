"""Distributed power routing between regional electricity markets.

Each market prices transaction traversal from its own DC optimal
dispatch; markets jointly discover cheapest routes with a path-vector
distance protocol and settle transactions first-in-first-serve.
"""

from .errors import (
    DanglingTie,
    DisconnectedGrid,
    InternalMismatch,
    NonConvergence,
    ParseError,
    PowerRouteError,
    ScenarioError,
    StaleState,
    UnbalancedInjection,
    ValidationError,
)
from .grid import (
    Branch,
    Bus,
    DcFlowSolution,
    Generator,
    MarketGraphCheck,
    MarketNetwork,
    TieLine,
    build_reduced_susceptance,
    check_limit_violations,
    solve_dc_flow,
    validate_market_graph,
)

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "Bus",
    "DanglingTie",
    "DcFlowSolution",
    "DisconnectedGrid",
    "Generator",
    "InternalMismatch",
    "MarketGraphCheck",
    "MarketNetwork",
    "NonConvergence",
    "ParseError",
    "PowerRouteError",
    "ScenarioError",
    "StaleState",
    "TieLine",
    "UnbalancedInjection",
    "ValidationError",
    "build_reduced_susceptance",
    "check_limit_violations",
    "solve_dc_flow",
    "validate_market_graph",
]
