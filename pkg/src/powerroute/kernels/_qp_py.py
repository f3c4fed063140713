"""Dense convex QP solver: two-phase primal active-set method.

Minimizes ``0.5 x'Hx + g'x`` subject to ``A_eq x = b_eq`` and
``A_ub x <= b_ub`` for symmetric positive semidefinite H (H = 0 gives a
plain LP). Phase 1 finds a feasible point by minimizing the worst
inequality violation as an LP; phase 2 walks the active set with
null-space steps. The reduced Hessian is eigendecomposed so singular
curvature (the LP case, or linear-cost generators) takes descent rays to
a blocking constraint instead of failing a factorization.

Pivot decisions break ties on the lowest constraint index, so runs are
deterministic. The compiled kernel mirrors this file step for step.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

OPTIMAL = 0
INFEASIBLE = 1
ITER_LIMIT = 2
UNBOUNDED = 3

FEAS_TOL = 1e-8
RANK_TOL = 1e-11
CURV_TOL = 1e-11
MULT_TOL = 1e-9
STEP_TOL = 1e-10
DIR_TOL = 1e-12


def solve_qp(
    h: np.ndarray,
    g: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    a_ub: np.ndarray,
    b_ub: np.ndarray,
    max_iter: int = 0,
) -> tuple[int, np.ndarray, int]:
    """Returns (status, x, iterations). x is meaningful when status is 0."""
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    h = np.asarray(h, dtype=float).reshape(n, n)
    a_eq = np.asarray(a_eq, dtype=float).reshape(-1, n)
    b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
    a_ub = np.asarray(a_ub, dtype=float).reshape(-1, n)
    b_ub = np.asarray(b_ub, dtype=float).reshape(-1)
    if max_iter <= 0:
        max_iter = 50 * (n + a_ub.shape[0] + 5)

    if a_eq.shape[0]:
        x0 = np.linalg.lstsq(a_eq, b_eq, rcond=None)[0]
        if np.max(np.abs(a_eq @ x0 - b_eq), initial=0.0) > 1e-7:
            return INFEASIBLE, x0, 0
    else:
        x0 = np.zeros(n)

    total_iters = 0
    viol = np.max(a_ub @ x0 - b_ub, initial=0.0) if a_ub.shape[0] else 0.0
    if viol > FEAS_TOL:
        # Phase 1: min s subject to A_ub x - s <= b_ub, -s <= 0, A_eq x = b_eq.
        h1 = np.zeros((n + 1, n + 1))
        g1 = np.zeros(n + 1)
        g1[n] = 1.0
        aeq1 = np.hstack([a_eq, np.zeros((a_eq.shape[0], 1))])
        c1 = np.vstack(
            [
                np.hstack([a_ub, -np.ones((a_ub.shape[0], 1))]),
                np.hstack([np.zeros((1, n)), -np.ones((1, 1))]),
            ]
        )
        d1 = np.concatenate([b_ub, [0.0]])
        z0 = np.concatenate([x0, [viol + 1.0]])
        status, z, iters = _active_set(h1, g1, aeq1, b_eq, c1, d1, z0, max_iter)
        total_iters += iters
        if status == ITER_LIMIT:
            return ITER_LIMIT, x0, total_iters
        if status != OPTIMAL or z[n] > 10 * FEAS_TOL:
            return INFEASIBLE, z[:n], total_iters
        x0 = z[:n]

    status, x, iters = _active_set(h, g, a_eq, b_eq, a_ub, b_ub, x0, max_iter)
    return status, x, total_iters + iters


def _active_set(
    h: np.ndarray,
    g: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    c: np.ndarray,
    d: np.ndarray,
    x0: np.ndarray,
    max_iter: int,
) -> tuple[int, np.ndarray, int]:
    n = x0.shape[0]
    me = a_eq.shape[0]
    mi = c.shape[0]
    x = x0.copy()
    working: list[int] = []

    for iteration in range(1, max_iter + 1):
        grad = h @ x + g
        a_w = np.vstack([a_eq, c[working]]) if (me or working) else np.zeros((0, n))
        m_w = a_w.shape[0]

        if m_w == 0:
            rank = 0
            z_basis = np.eye(n)
            q = r = piv = None
        else:
            q, r, piv = scipy.linalg.qr(a_w.T, pivoting=True)
            diag = np.abs(np.diag(r[: min(n, m_w), : min(n, m_w)]))
            cutoff = RANK_TOL * max(diag[0] if diag.size else 0.0, 1.0)
            rank = int(np.sum(diag > cutoff))
            z_basis = q[:, rank:]

        direction = None
        is_ray = False
        if z_basis.shape[1]:
            hz = z_basis.T @ h @ z_basis
            rhs = -(z_basis.T @ grad)
            lam, vec = np.linalg.eigh(hz)
            cut = CURV_TOL * max(lam[-1] if lam.size else 0.0, 1.0)
            w = vec.T @ rhs
            null_mask = lam <= cut
            w_null = np.where(null_mask, w, 0.0)
            if np.max(np.abs(w_null), initial=0.0) > 1e-9 * (1.0 + np.max(np.abs(rhs), initial=0.0)):
                ray = z_basis @ (vec @ w_null)
                direction = ray / np.max(np.abs(ray))
                is_ray = True
            else:
                w_pos = np.where(null_mask, 0.0, w / np.where(null_mask, 1.0, lam))
                direction = z_basis @ (vec @ w_pos)

        if direction is None or (
            not is_ray
            and np.max(np.abs(direction), initial=0.0) <= STEP_TOL * (1.0 + np.max(np.abs(x)))
        ):
            # Stationary on the working set: check multipliers, drop or stop.
            if not working:
                return OPTIMAL, x, iteration
            mult = np.zeros(m_w)
            if m_w:
                y = q[:, :rank].T @ (-grad)
                sol = scipy.linalg.solve_triangular(r[:rank, :rank], y)
                mult_p = np.zeros(m_w)
                mult_p[:rank] = sol
                mult[piv] = mult_p
            ineq_mult = mult[me:]
            worst = int(np.argmin(ineq_mult))
            if ineq_mult[worst] >= -MULT_TOL:
                return OPTIMAL, x, iteration
            working.pop(worst)
            continue

        # Ratio test against inequalities outside the working set.
        alpha = np.inf if is_ray else 1.0
        blocker = -1
        if mi:
            cd = c @ direction
            cx = c @ x
            in_w = np.zeros(mi, dtype=bool)
            in_w[working] = True
            for i in range(mi):
                if in_w[i] or cd[i] <= DIR_TOL:
                    continue
                step = (d[i] - cx[i]) / cd[i]
                if step < 0.0:
                    step = 0.0
                if step < alpha - 1e-15:
                    alpha = step
                    blocker = i
        if is_ray and blocker < 0:
            return UNBOUNDED, x, iteration
        x = x + alpha * direction
        if blocker >= 0:
            working.append(blocker)
            working.sort()

    return ITER_LIMIT, x, max_iter
