# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the pure-Python active-set QP solver.

Same algorithm, same tolerances, same lowest-index pivot rule as
_qp_py.py. The factorizations call the LAPACK routines scipy wraps
(dgeqp3/dorgqr for the pivoted QR, dsyevd for the reduced Hessian,
dtrtrs for the multiplier solve) directly through cython_lapack, and
the stepping logic runs as C loops over preallocated buffers. Keep the
two files in lockstep when changing either.
"""

import numpy as np

from libc.math cimport INFINITY, fabs
from libc.string cimport memcpy, memset
from scipy.linalg.cython_lapack cimport dgeqp3, dorgqr, dsyevd, dtrtrs

OPTIMAL = 0
INFEASIBLE = 1
ITER_LIMIT = 2
UNBOUNDED = 3

cdef double FEAS_TOL = 1e-8
cdef double RANK_TOL = 1e-11
cdef double CURV_TOL = 1e-11
cdef double MULT_TOL = 1e-9
cdef double STEP_TOL = 1e-10
cdef double DIR_TOL = 1e-12


def solve_qp(h, g, a_eq, b_eq, a_ub, b_ub, int max_iter=0):
    """Returns (status, x, iterations). x is meaningful when status is 0."""
    g = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t n = g.shape[0]
    h = np.ascontiguousarray(h, dtype=np.float64).reshape(n, n)
    a_eq = np.ascontiguousarray(a_eq, dtype=np.float64).reshape(-1, n)
    b_eq = np.ascontiguousarray(b_eq, dtype=np.float64).reshape(-1)
    a_ub = np.ascontiguousarray(a_ub, dtype=np.float64).reshape(-1, n)
    b_ub = np.ascontiguousarray(b_ub, dtype=np.float64).reshape(-1)
    if max_iter <= 0:
        max_iter = 50 * (n + a_ub.shape[0] + 5)

    if a_eq.shape[0]:
        x0 = np.linalg.lstsq(a_eq, b_eq, rcond=None)[0]
        if np.max(np.abs(a_eq @ x0 - b_eq), initial=0.0) > 1e-7:
            return INFEASIBLE, x0, 0
    else:
        x0 = np.zeros(n)

    cdef int total_iters = 0
    cdef double viol = 0.0
    if a_ub.shape[0]:
        viol = np.max(a_ub @ x0 - b_ub, initial=0.0)
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


cdef double _vmax_abs(double* v, Py_ssize_t k) noexcept:
    cdef Py_ssize_t i
    cdef double m = 0.0
    for i in range(k):
        if fabs(v[i]) > m:
            m = fabs(v[i])
    return m


def _active_set(h_in, g_in, a_eq_in, b_eq_in, c_in, d_in, x0, int max_iter):
    x_arr = np.array(x0, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n = x_arr.shape[0]
    h_arr = np.ascontiguousarray(h_in, dtype=np.float64).reshape(n, n)
    a_eq_arr = np.ascontiguousarray(a_eq_in, dtype=np.float64).reshape(-1, n)
    c_arr = np.ascontiguousarray(c_in, dtype=np.float64).reshape(-1, n)
    d_arr = np.ascontiguousarray(d_in, dtype=np.float64).reshape(-1)

    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] a_eq = a_eq_arr
    cdef double[:, ::1] c = c_arr
    cdef double[::1] d = d_arr
    cdef double[::1] g = np.ascontiguousarray(g_in, dtype=np.float64).reshape(-1)
    cdef double[::1] x = x_arr

    cdef Py_ssize_t me = a_eq.shape[0]
    cdef Py_ssize_t mi = c.shape[0]
    cdef Py_ssize_t mmax = me + mi
    cdef int ni = <int> n

    # Scratch, sized once for the worst iteration. Column-major flats for
    # LAPACK: fbuf holds the factored a_w.T (n x m_w), qbuf the full Q.
    cdef double[::1] fbuf = np.empty(n * (mmax if mmax > 0 else 1))
    cdef double[::1] qbuf = np.empty(n * n)
    cdef double[::1] tmp = np.empty(n * n)
    cdef double[::1] hz = np.empty(n * n)
    cdef double[::1] tau = np.empty(n)
    cdef double[::1] grad = np.empty(n)
    cdef double[::1] dirv = np.empty(n)
    cdef double[::1] lam = np.empty(n)
    cdef double[::1] rhs = np.empty(n)
    cdef double[::1] wvec = np.empty(n)
    cdef double[::1] wsel = np.empty(n)
    cdef double[::1] yvec = np.empty(n)
    cdef double[::1] sol = np.empty(n)
    cdef double[::1] mult = np.empty(mmax if mmax > 0 else 1)
    cdef int[::1] jpvt = np.empty(mmax if mmax > 0 else 1, dtype=np.intc)
    cdef int[::1] wk = np.empty(mi if mi > 0 else 1, dtype=np.intc)
    cdef unsigned char[::1] in_w = np.zeros(mi if mi > 0 else 1, dtype=np.uint8)

    cdef char ch_v = b"V"[0]
    cdef char ch_l = b"L"[0]
    cdef char ch_u = b"U"[0]
    cdef char ch_n = b"N"[0]
    cdef int info = 0, lquery = -1, ione = 1
    cdef int mm1 = <int> (mmax if mmax > 0 else 1)
    cdef double wq
    cdef int iwq, lw, liw

    # Workspace queries at the largest dimensions this call can see.
    dgeqp3(&ni, &mm1, &fbuf[0], &ni, &jpvt[0], &tau[0], &wq, &lquery, &info)
    lw = <int> wq
    dorgqr(&ni, &ni, &ni, &qbuf[0], &ni, &tau[0], &wq, &lquery, &info)
    if <int> wq > lw:
        lw = <int> wq
    dsyevd(&ch_v, &ch_l, &ni, &hz[0], &ni, &lam[0], &wq, &lquery, &iwq, &lquery, &info)
    if <int> wq > lw:
        lw = <int> wq
    liw = iwq if iwq > 1 else 1
    cdef double[::1] work = np.empty(lw if lw > 1 else 1)
    cdef int[::1] iwork = np.empty(liw, dtype=np.intc)

    cdef Py_ssize_t i, j, l, jz, iz, kmin, kz, m_w, rank, n_work = 0, pos
    cdef int iteration, blocker, bestj, imw, ikmin, ikz, irank
    cdef double acc, cutoff, cut, dmax, alpha, step, cdi, cxi
    cdef double wn_max, rhs_max, best
    cdef bint have_dir, is_ray

    for iteration in range(1, max_iter + 1):
        for i in range(n):
            acc = g[i]
            for j in range(n):
                acc += h[i, j] * x[j]
            grad[i] = acc

        m_w = me + n_work
        rank = 0
        if m_w == 0:
            for j in range(n):
                for i in range(n):
                    qbuf[i + j * n] = 1.0 if i == j else 0.0
        else:
            # Factor a_w.T with column pivoting; columns are a_w rows, so
            # the row-major constraint rows copy straight in.
            for j in range(me):
                memcpy(&fbuf[j * n], &a_eq[j, 0], n * sizeof(double))
            for j in range(n_work):
                memcpy(&fbuf[(me + j) * n], &c[wk[j], 0], n * sizeof(double))
            memset(&jpvt[0], 0, m_w * sizeof(int))
            imw = <int> m_w
            dgeqp3(&ni, &imw, &fbuf[0], &ni, &jpvt[0], &tau[0], &work[0], &lw, &info)
            if info != 0:
                raise RuntimeError(f"dgeqp3 failed with info={info}")
            kmin = n if n < m_w else m_w
            cutoff = fabs(fbuf[0])
            if cutoff < 1.0:
                cutoff = 1.0
            cutoff *= RANK_TOL
            for i in range(kmin):
                if fabs(fbuf[i + i * n]) > cutoff:
                    rank += 1
            memcpy(&qbuf[0], &fbuf[0], n * kmin * sizeof(double))
            ikmin = <int> kmin
            dorgqr(&ni, &ni, &ikmin, &qbuf[0], &ni, &tau[0], &work[0], &lw, &info)
            if info != 0:
                raise RuntimeError(f"dorgqr failed with info={info}")

        # Null-space step: columns rank..n-1 of Q span ker(a_w).
        kz = n - rank
        have_dir = kz > 0
        is_ray = False
        if have_dir:
            for jz in range(kz):
                for i in range(n):
                    acc = 0.0
                    for l in range(n):
                        acc += h[i, l] * qbuf[l + (rank + jz) * n]
                    tmp[i + jz * n] = acc
            for jz in range(kz):
                for iz in range(kz):
                    acc = 0.0
                    for l in range(n):
                        acc += qbuf[l + (rank + iz) * n] * tmp[l + jz * n]
                    hz[iz + jz * kz] = acc
            for iz in range(kz):
                acc = 0.0
                for l in range(n):
                    acc += qbuf[l + (rank + iz) * n] * grad[l]
                rhs[iz] = -acc
            ikz = <int> kz
            dsyevd(&ch_v, &ch_l, &ikz, &hz[0], &ikz, &lam[0], &work[0], &lw,
                   &iwork[0], &liw, &info)
            if info != 0:
                raise RuntimeError(f"dsyevd failed with info={info}")
            cut = lam[kz - 1] if lam[kz - 1] > 1.0 else 1.0
            cut *= CURV_TOL
            for jz in range(kz):
                acc = 0.0
                for l in range(kz):
                    acc += hz[l + jz * kz] * rhs[l]
                wvec[jz] = acc
            wn_max = 0.0
            rhs_max = _vmax_abs(&rhs[0], kz)
            for jz in range(kz):
                wsel[jz] = wvec[jz] if lam[jz] <= cut else 0.0
                if fabs(wsel[jz]) > wn_max:
                    wn_max = fabs(wsel[jz])
            if wn_max > 1e-9 * (1.0 + rhs_max):
                # Singular curvature with a downhill null component: ray.
                is_ray = True
            else:
                for jz in range(kz):
                    wsel[jz] = 0.0 if lam[jz] <= cut else wvec[jz] / lam[jz]
            for l in range(kz):
                acc = 0.0
                for jz in range(kz):
                    acc += hz[l + jz * kz] * wsel[jz]
                yvec[l] = acc
            for i in range(n):
                acc = 0.0
                for l in range(kz):
                    acc += qbuf[i + (rank + l) * n] * yvec[l]
                dirv[i] = acc
            if is_ray:
                dmax = _vmax_abs(&dirv[0], n)
                for i in range(n):
                    dirv[i] /= dmax

        if not have_dir or (
            not is_ray
            and _vmax_abs(&dirv[0], n) <= STEP_TOL * (1.0 + _vmax_abs(&x[0], n))
        ):
            # Stationary on the working set: check multipliers, drop or stop.
            if n_work == 0:
                return OPTIMAL, x_arr, iteration
            for j in range(rank):
                acc = 0.0
                for i in range(n):
                    acc += qbuf[i + j * n] * grad[i]
                sol[j] = -acc
            if rank > 0:
                irank = <int> rank
                dtrtrs(&ch_u, &ch_n, &ch_n, &irank, &ione, &fbuf[0], &ni,
                       &sol[0], &irank, &info)
                if info != 0:
                    raise RuntimeError(f"dtrtrs failed with info={info}")
            for j in range(m_w):
                mult[j] = 0.0
            for j in range(rank):
                mult[jpvt[j] - 1] = sol[j]
            best = mult[me]
            bestj = 0
            for j in range(1, n_work):
                if mult[me + j] < best:
                    best = mult[me + j]
                    bestj = <int> j
            if best >= -MULT_TOL:
                return OPTIMAL, x_arr, iteration
            for j in range(bestj, n_work - 1):
                wk[j] = wk[j + 1]
            n_work -= 1
            continue

        # Ratio test against inequalities outside the working set.
        alpha = INFINITY if is_ray else 1.0
        blocker = -1
        if mi:
            for i in range(mi):
                in_w[i] = 0
            for j in range(n_work):
                in_w[wk[j]] = 1
            for i in range(mi):
                if in_w[i]:
                    continue
                cdi = 0.0
                for j in range(n):
                    cdi += c[i, j] * dirv[j]
                if cdi <= DIR_TOL:
                    continue
                cxi = 0.0
                for j in range(n):
                    cxi += c[i, j] * x[j]
                step = (d[i] - cxi) / cdi
                if step < 0.0:
                    step = 0.0
                if step < alpha - 1e-15:
                    alpha = step
                    blocker = <int> i
        if is_ray and blocker < 0:
            return UNBOUNDED, x_arr, iteration
        for i in range(n):
            x[i] = x[i] + alpha * dirv[i]
        if blocker >= 0:
            pos = n_work
            while pos > 0 and wk[pos - 1] > blocker:
                wk[pos] = wk[pos - 1]
                pos -= 1
            wk[pos] = blocker
            n_work += 1

    return ITER_LIMIT, x_arr, max_iter
