"""Exception types shared across the package."""

from __future__ import annotations


class PowerRouteError(Exception):
    """Base class for all package-specific errors."""


class DisconnectedGrid(PowerRouteError):
    """Internal branch graph of a market does not connect all buses."""


class UnbalancedInjection(PowerRouteError):
    """Nodal injections do not sum to zero within tolerance."""


class DanglingTie(PowerRouteError):
    """Tie line references a market or bus that does not exist."""


class UnknownNeighbor(PowerRouteError):
    """Weight query names a market with no tie to the queried agent."""


class NonConvergence(PowerRouteError):
    """Route tables failed to settle within the sweep budget.

    Must not occur on loop-free market graphs; treated as a defect.
    """


class StaleState(PowerRouteError):
    """Settlement attempted against a base dispatch that changed since pricing."""


class InternalMismatch(PowerRouteError):
    """Itemized payments disagree with the discovered route cost."""


class ScenarioError(PowerRouteError):
    """Problem in a scenario file; carries a 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class ParseError(ScenarioError):
    """Malformed scenario text (unknown record, bad arity, bad number)."""


class ValidationError(ScenarioError):
    """Well-formed scenario that violates a model invariant."""
