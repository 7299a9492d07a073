# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled inner loops for the quadratic-regularized transport solver.

Every routine works on dense point clouds and never materialises the cost
matrix: ``c_ij = 0.5 * ||x_i - y_j||^2`` is recomputed on the fly.  The
pure-numpy twins live in :mod:`qotlimit._pykernels` and must return the same
values up to rounding.
"""

import numpy as np

from libc.math cimport INFINITY, NAN, isfinite, sqrt
from libcpp.algorithm cimport sort
from libcpp.utility cimport pair
from libcpp.vector cimport vector


cdef inline double _half_sq(const double[:, ::1] x, Py_ssize_t i,
                            const double[:, ::1] y, Py_ssize_t j,
                            Py_ssize_t d) noexcept nogil:
    cdef double s = 0.0
    cdef double t
    cdef Py_ssize_t k
    for k in range(d):
        t = x[i, k] - y[j, k]
        s += t * t
    return 0.5 * s


cdef struct _Buckets:
    Py_ssize_t d
    Py_ssize_t nb[3]
    double lo[3]
    double inv[3]
    Py_ssize_t* start      # ncells + 1 offsets into the sorted column order
    double* ys             # coordinate-major columns in bucket order
    double* bs
    double* ws
    Py_ssize_t n


cdef Py_ssize_t _gather(_Buckets* bk, const double[:, ::1] x, Py_ssize_t i,
                        double rad, double cut, double* tc, double* wc,
                        double* f_out, double* slope_out, double g) noexcept nogil:
    # thresholds below ``cut`` from all buckets meeting the box of half-width rad
    cdef Py_ssize_t d = bk.d, k, c0, c1, c2, m, cell, cnt = 0
    cdef Py_ssize_t lo[3]
    cdef Py_ssize_t hi[3]
    cdef double s, diff, tj, f = 0.0, slope = 0.0
    for k in range(3):
        lo[k] = 0
        hi[k] = 0
    for k in range(d):
        s = (x[i, k] - rad - bk.lo[k]) * bk.inv[k]
        lo[k] = <Py_ssize_t>s if s > 0 else 0
        s = (x[i, k] + rad - bk.lo[k]) * bk.inv[k]
        hi[k] = <Py_ssize_t>s if s < bk.nb[k] - 1 else bk.nb[k] - 1
        if hi[k] < lo[k]:
            return 0
    for c0 in range(lo[0], hi[0] + 1):
        for c1 in range(lo[1], hi[1] + 1):
            for c2 in range(lo[2], hi[2] + 1):
                cell = (c0 * bk.nb[1] + c1) * bk.nb[2] + c2
                for m in range(bk.start[cell], bk.start[cell + 1]):
                    tj = -bk.bs[m]
                    for k in range(d):
                        diff = x[i, k] - bk.ys[k * bk.n + m]
                        tj = tj + 0.5 * diff * diff
                    if tj < cut:
                        tc[cnt] = tj
                        wc[cnt] = bk.ws[m]
                        cnt += 1
                        if tj < g:
                            f += (g - tj) * bk.ws[m]
                            slope += bk.ws[m]
    f_out[0] = f
    slope_out[0] = slope
    return cnt


cdef double _sorted_root(double* tc, double* wc, Py_ssize_t cnt, double tgt,
                         Py_ssize_t* nact) noexcept nogil:
    # exact scan over sorted thresholds; reference path, also the fallback
    cdef vector[pair[double, double]] buf
    cdef Py_ssize_t m
    cdef double sw = 0.0, stw = 0.0, root = NAN
    buf.reserve(cnt)
    for m in range(cnt):
        buf.push_back(pair[double, double](tc[m], wc[m]))
    sort(buf.begin(), buf.end())
    m = 0
    while m < cnt:
        sw += buf[m].second
        stw += buf[m].first * buf[m].second
        root = (tgt + stw) / sw
        if m + 1 == cnt or root <= buf[m + 1].first:
            break
        m += 1
    nact[0] = m + 1
    return root


cdef double _active_root(double* tc, double* wc, Py_ssize_t cnt, double tgt,
                         double bound, Py_ssize_t* nact) noexcept nogil:
    # Newton from an upper bracket; exact once the active set stops moving
    cdef Py_ssize_t m, n_on = 0, prev = -1, it = 0
    cdef double sw = 0.0, stw = 0.0, root = bound
    while it < 64:
        sw = 0.0
        stw = 0.0
        n_on = 0
        for m in range(cnt):
            if tc[m] < root:
                sw += wc[m]
                stw += tc[m] * wc[m]
                n_on += 1
        if n_on == prev or sw <= 0.0:
            break
        prev = n_on
        root = (tgt + stw) / sw
        it += 1
    if it == 64 or sw <= 0.0:
        return _sorted_root(tc, wc, cnt, tgt, nact)
    nact[0] = n_on
    return root


def row_roots(const double[:, ::1] x, const double[:, ::1] y,
              const double[::1] b, const double[::1] w,
              const double[::1] target, const double[::1] guess):
    """Solve ``sum_j (a_i - t_ij)_+ w_j = target_i`` exactly for every row.

    Thresholds are ``t_ij = 0.5 ||x_i - y_j||^2 - b_j``.  ``guess`` (NaN for
    none) seeds an upper bracket; ``f_i(guess_i) / target_i - 1`` is returned
    as the pre-update defect.

    From the bracket, Newton steps on the convex piecewise-linear left side
    decrease monotonically onto the root and stop once the active set is
    unchanged, which pins the exact root of the final linear piece.  A sorted
    prefix scan takes over if that ever fails to settle.  With a guess, only
    columns within ``sqrt(2 (bound + max b))`` of the row are visited, found
    through a uniform bucket grid.
    """
    cdef Py_ssize_t n0 = x.shape[0]
    cdef Py_ssize_t n1 = y.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    if y.shape[1] != d or b.shape[0] != n1 or w.shape[0] != n1:
        raise ValueError("shape mismatch between rows and columns")
    if target.shape[0] != n0 or guess.shape[0] != n0:
        raise ValueError("target/guess must have one entry per row")
    if d > 3:
        raise ValueError("at most three dimensions are supported")

    a_arr = np.empty(n0, dtype=np.float64)
    act_arr = np.empty(n0, dtype=np.intp)
    pre_arr = np.full(n0, np.nan, dtype=np.float64)
    cdef double[::1] a = a_arr
    cdef Py_ssize_t[::1] active = act_arr
    cdef double[::1] pre = pre_arr
    t_arr = np.empty(n1, dtype=np.float64)
    tc_arr = np.empty(max(n1, 1), dtype=np.float64)
    wc_arr = np.empty(max(n1, 1), dtype=np.float64)
    cdef double[::1] t = t_arr
    cdef double[::1] tc = tc_arr
    cdef double[::1] wc = wc_arr
    # coordinate-major copy of the columns keeps the distance loop contiguous
    yt_arr = np.ascontiguousarray(np.asarray(y).T)
    cdef const double[:, ::1] yt = yt_arr

    # bucket grid over the columns, roughly four columns per cell
    yn = np.asarray(y)
    b_np = np.asarray(b)
    cdef _Buckets bk
    bk.d = d
    bk.n = n1
    per_axis = max(1, int(round((n1 / 4.0) ** (1.0 / max(d, 1))))) if n1 else 1
    ids = np.zeros(n1, dtype=np.intp)
    for k_ in range(3):
        if k_ < d and n1:
            lo_k = float(yn[:, k_].min())
            span = float(yn[:, k_].max()) - lo_k
            nb_k = per_axis if span > 0 else 1
            inv_k = nb_k / span if span > 0 else 0.0
            cell_k = np.minimum((yn[:, k_] - lo_k) * inv_k, nb_k - 1).astype(np.intp)
        else:
            lo_k, nb_k, inv_k = 0.0, 1, 0.0
            cell_k = np.zeros(n1, dtype=np.intp)
        bk.lo[k_] = lo_k
        bk.nb[k_] = nb_k
        bk.inv[k_] = inv_k
        ids = ids * nb_k + cell_k
    order = np.argsort(ids, kind="stable")
    ncells = bk.nb[0] * bk.nb[1] * bk.nb[2]
    start_arr = np.searchsorted(ids[order], np.arange(ncells + 1)).astype(np.intp)
    ys_arr = np.ascontiguousarray(yn[order].T)
    bs_arr = np.ascontiguousarray(b_np[order])
    ws_arr = np.ascontiguousarray(np.asarray(w)[order])
    cdef Py_ssize_t[::1] start_v = start_arr
    cdef double[:, ::1] ys_v = ys_arr
    cdef double[::1] bs_v = bs_arr
    cdef double[::1] ws_v = ws_arr
    if n1:
        bk.start = &start_v[0]
        bk.ys = &ys_v[0, 0]
        bk.bs = &bs_v[0]
        bk.ws = &ws_v[0]
    cdef double bmax = float(b_np.max()) if n1 else 0.0

    cdef Py_ssize_t i, j, k, cnt, nact
    cdef double g, f, slope, tmin, wmin, bound, tj, root, tgt, xk, diff, rad2
    cdef bint pruned

    with nogil:
        for i in range(n0):
            tgt = target[i]
            g = guess[i]
            pruned = False
            if isfinite(g):
                rad2 = 2.0 * (g + bmax)
                if rad2 > 0.0:
                    cnt = _gather(&bk, x, i, sqrt(rad2), g, &tc[0], &wc[0],
                                  &f, &slope, g)
                    if slope > 0.0:
                        pruned = True
                        pre[i] = f / tgt - 1.0
                        if f < tgt:
                            bound = g + (tgt - f) / slope
                            cnt = _gather(&bk, x, i, sqrt(2.0 * (bound + bmax)),
                                          bound, &tc[0], &wc[0], &f, &slope, g)
                        else:
                            bound = g
            if not pruned:
                for j in range(n1):
                    t[j] = -b[j]
                for k in range(d):
                    xk = x[i, k]
                    for j in range(n1):
                        diff = xk - yt[k, j]
                        t[j] += 0.5 * diff * diff
                tmin = INFINITY
                wmin = 1.0
                for j in range(n1):
                    if t[j] < tmin:
                        tmin = t[j]
                        wmin = w[j]
                bound = tmin + tgt / wmin
                if isfinite(g):
                    f = 0.0
                    slope = 0.0
                    for j in range(n1):
                        tj = t[j]
                        if tj < g:
                            f += (g - tj) * w[j]
                            slope += w[j]
                    pre[i] = f / tgt - 1.0
                    if f >= tgt:
                        bound = g
                    elif slope > 0.0:
                        # tangent from the left of a convex increasing map overshoots
                        bound = g + (tgt - f) / slope
                cnt = 0
                for j in range(n1):
                    if t[j] < bound:
                        tc[cnt] = t[j]
                        wc[cnt] = w[j]
                        cnt += 1
                if cnt == 0:
                    # bound equals the smallest threshold up to rounding
                    tc[0] = tmin
                    wc[0] = wmin
                    cnt = 1
            root = _active_root(&tc[0], &wc[0], cnt, tgt, bound, &nact)
            a[i] = root
            active[i] = nact
    return a_arr, act_arr, pre_arr


def plan_moments(const double[:, ::1] x, const double[:, ::1] y,
                 const double[::1] a, const double[::1] b,
                 const double[::1] p, const double[::1] q, double eps):
    """Stream the recovered density ``u = (a_i + b_j - c_ij)_+ / eps``.

    Returns ``(row_mass, col_mass, sum_cu, sum_uu, nnz)`` with
    ``row_mass_i = sum_j u_ij q_j``, ``col_mass_j = sum_i u_ij p_i``,
    ``sum_cu = sum c_ij u_ij p_i q_j`` and ``sum_uu = sum u_ij^2 p_i q_j``.
    """
    cdef Py_ssize_t n0 = x.shape[0]
    cdef Py_ssize_t n1 = y.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    if y.shape[1] != d or a.shape[0] != n0 or p.shape[0] != n0:
        raise ValueError("row arrays do not match x")
    if b.shape[0] != n1 or q.shape[0] != n1:
        raise ValueError("column arrays do not match y")

    row_arr = np.zeros(n0, dtype=np.float64)
    col_arr = np.zeros(n1, dtype=np.float64)
    cdef double[::1] row = row_arr
    cdef double[::1] col = col_arr
    cdef Py_ssize_t i, j
    cdef long long nnz = 0
    cdef double c, v, u, r_cu, r_uu, r_m, s_cu = 0.0, s_uu = 0.0
    cdef double inv = 1.0 / eps

    with nogil:
        for i in range(n0):
            r_cu = 0.0
            r_uu = 0.0
            r_m = 0.0
            for j in range(n1):
                c = _half_sq(x, i, y, j, d)
                v = a[i] + b[j] - c
                if v > 0.0:
                    u = v * inv
                    r_m += u * q[j]
                    col[j] += u * p[i]
                    r_cu += c * u * q[j]
                    r_uu += u * u * q[j]
                    nnz += 1
            row[i] = r_m
            s_cu += r_cu * p[i]
            s_uu += r_uu * p[i]
    return row_arr, col_arr, s_cu, s_uu, int(nnz)


def plan_entries(const double[:, ::1] x, const double[:, ::1] y,
                 const double[::1] a, const double[::1] b,
                 double eps, double drop):
    """COO triplets of ``u = (a_i + b_j - c_ij)_+ / eps`` keeping ``u > drop``."""
    cdef Py_ssize_t n0 = x.shape[0]
    cdef Py_ssize_t n1 = y.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, j, pos = 0
    cdef long long count = 0
    cdef double u
    cdef double inv = 1.0 / eps

    with nogil:
        for i in range(n0):
            for j in range(n1):
                u = (a[i] + b[j] - _half_sq(x, i, y, j, d)) * inv
                if u > drop:
                    count += 1

    rows_arr = np.empty(count, dtype=np.intp)
    cols_arr = np.empty(count, dtype=np.intp)
    vals_arr = np.empty(count, dtype=np.float64)
    cdef Py_ssize_t[::1] rows = rows_arr
    cdef Py_ssize_t[::1] cols = cols_arr
    cdef double[::1] vals = vals_arr
    with nogil:
        for i in range(n0):
            for j in range(n1):
                u = (a[i] + b[j] - _half_sq(x, i, y, j, d)) * inv
                if u > drop:
                    rows[pos] = i
                    cols[pos] = j
                    vals[pos] = u
                    pos += 1
    return rows_arr, cols_arr, vals_arr
