"""QP kernel backend selection.

Imports the compiled active-set kernel when the extension built,
otherwise falls back to the pure-Python twin. Set POWERROUTE_PURE_PYTHON
to any non-empty value to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

OPTIMAL = 0
INFEASIBLE = 1
ITER_LIMIT = 2
UNBOUNDED = 3

if os.environ.get("POWERROUTE_PURE_PYTHON"):
    from . import _qp_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _qpcore as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _qp_py as _impl

        BACKEND = "python"


def solve_qp(
    h: np.ndarray,
    g: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    a_ub: np.ndarray,
    b_ub: np.ndarray,
    max_iter: int = 0,
) -> tuple[int, np.ndarray, int]:
    """Minimize 0.5 x'Hx + g'x over A_eq x = b_eq, A_ub x <= b_ub.

    Returns (status, x, iterations); statuses are the module constants.
    """
    return _impl.solve_qp(h, g, a_eq, b_eq, a_ub, b_ub, max_iter)


def backend_name() -> str:
    return BACKEND
