"""Plain-text settlement reports.

Every numeric field is printed with exactly 2 decimals, infinite
distances as "INF". Output depends only on the settlement record, so a
re-run over the same scenario renders byte-identical text.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence

from .engine import Settlement, World

_INDENT = "  "


def _money(x: float) -> str:
    if math.isinf(x):
        return "INF"
    return f"{x:.2f}"


def _table(rows: Sequence[Sequence[str]], align: str, indent: str) -> list[str]:
    """Columns padded to their widest cell; align is 'l'/'r' per column."""
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    out = []
    for row in rows:
        cells = [
            cell.ljust(w) if a == "l" else cell.rjust(w)
            for cell, w, a in zip(row, widths, align)
        ]
        out.append((indent + "  ".join(cells)).rstrip())
    return out


def _cost_table(costs: Mapping[str, float], order: Sequence[str], indent: str) -> list[str]:
    lines = [indent + "MARKET COSTS ($/h)"]
    rows = [(m, _money(costs[m])) for m in order]
    lines += _table(rows, "lr", indent + _INDENT)
    return lines


def _iteration_table(settlement: Settlement, indent: str) -> list[str]:
    trace = settlement.trace
    columns = [m for m in trace.market_order if m != trace.source]
    rows = [["ITER", *columns]]
    for row in trace.rows:
        rows.append(
            [str(row.iteration), *(_money(row.distances[m]) for m in columns)]
        )
    return _table(rows, "r" * (len(columns) + 1), indent)


def _payments(settlement: Settlement, indent: str) -> list[str]:
    lines = [indent + "PAYMENTS ($/h)"]
    rows = []
    for item in settlement.items:
        marker = " (negative)" if item.amount < 0 else ""
        rows.append((item.payee, item.kind, _money(item.amount) + marker))
    rows.append(("TOTAL", "", _money(settlement.total)))
    lines += _table(rows, "llr", indent + _INDENT)
    return lines


def render_report(
    settlements: Sequence[Settlement],
    world: World,
    initial_costs: Mapping[str, float] | None = None,
) -> str:
    """Report text: initial cost table, then one block per transaction.

    ``initial_costs`` is the per-market cost before any of the given
    settlements were applied; defaults to the world's current costs,
    which is only right when nothing has settled yet.
    """
    order = world.market_order
    if initial_costs is None:
        initial_costs = world.market_costs()
    lines = _cost_table(initial_costs, order, "")
    for s in settlements:
        txn = s.transaction
        lines.append("")
        lines.append(
            f"TXN {txn.id}: {txn.seller_market}:{txn.seller_bus}"
            f" -> {txn.buyer_market}:{txn.buyer_bus}  {txn.p_tr:.2f} MW"
        )
        if s.trace is not None:
            lines += _iteration_table(s, _INDENT)
        if s.settled:
            lines.append(_INDENT + "ROUTE: " + "-".join(s.route))
            lines += _payments(s, _INDENT)
        else:
            lines.append(_INDENT + f"DENIED: {s.reason.value}")
        lines += _cost_table(s.market_costs, order, _INDENT)
    return "\n".join(lines) + "\n"


def render_trace(settlements: Sequence[Settlement]) -> str:
    """Sidecar text with the full per-sweep history of every routing run."""
    blocks = []
    for s in settlements:
        txn = s.transaction
        lines = [
            f"TXN {txn.id}: {txn.seller_market}:{txn.seller_bus}"
            f" -> {txn.buyer_market}:{txn.buyer_bus}  {txn.p_tr:.2f} MW"
        ]
        if s.trace is None:
            lines.append(_INDENT + "internal trade, no routing")
        else:
            trace = s.trace
            columns = [m for m in trace.market_order if m != trace.source]
            rows = [["ITER", "KIND", "CHANGED", *columns]]
            for row in trace.rows:
                rows.append(
                    [
                        str(row.iteration),
                        row.kind,
                        "yes" if row.changed else "no",
                        *(_money(row.distances[m]) for m in columns),
                    ]
                )
            lines += _table(rows, "rll" + "r" * len(columns), _INDENT)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n" if blocks else ""
