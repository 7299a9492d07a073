"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures and return values; rows are processed in blocks so the
cost matrix is never held in full.
"""

import numpy as np

_BLOCK_CELLS = 2_000_000


def _block_rows(n0, n1):
    return max(1, min(n0, _BLOCK_CELLS // max(n1, 1)))


def _half_sq(x, y):
    diff = x[:, None, :] - y[None, :, :]
    return 0.5 * np.einsum("ijk,ijk->ij", diff, diff)


def row_roots(x, y, b, w, target, guess):
    """Solve ``sum_j (a_i - t_ij)_+ w_j = target_i`` by sorting every row."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    guess = np.asarray(guess, dtype=np.float64)
    n0, n1 = x.shape[0], y.shape[0]
    if y.shape[1] != x.shape[1] or b.shape[0] != n1 or w.shape[0] != n1:
        raise ValueError("shape mismatch between rows and columns")
    if target.shape[0] != n0 or guess.shape[0] != n0:
        raise ValueError("target/guess must have one entry per row")

    a = np.empty(n0)
    active = np.empty(n0, dtype=np.intp)
    pre = np.full(n0, np.nan)
    step = _block_rows(n0, n1)
    for start in range(0, n0, step):
        sl = slice(start, min(n0, start + step))
        t = _half_sq(x[sl], y) - b[None, :]
        g = guess[sl]
        has = np.isfinite(g)
        if has.any():
            gap = np.where(has[:, None], g[:, None] - t, 0.0)
            f = np.sum(np.maximum(gap, 0.0) * w[None, :], axis=1)
            pre[sl] = np.where(has, f / target[sl] - 1.0, np.nan)
        order = np.argsort(t, axis=1, kind="stable")
        ts = np.take_along_axis(t, order, axis=1)
        ws = w[order]
        sw = np.cumsum(ws, axis=1)
        stw = np.cumsum(ts * ws, axis=1)
        roots = (target[sl, None] + stw) / sw
        nxt = np.concatenate([ts[:, 1:], np.full((ts.shape[0], 1), np.inf)], axis=1)
        valid = roots <= nxt
        m = np.argmax(valid, axis=1)
        rows = np.arange(ts.shape[0])
        a[sl] = roots[rows, m]
        active[sl] = m + 1
    return a, active, pre


def plan_moments(x, y, a, b, p, q, eps):
    """Stream the recovered density; see the compiled twin for the contract."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n0, n1 = x.shape[0], y.shape[0]
    if y.shape[1] != x.shape[1] or len(a) != n0 or len(p) != n0:
        raise ValueError("row arrays do not match x")
    if len(b) != n1 or len(q) != n1:
        raise ValueError("column arrays do not match y")
    row = np.zeros(n0)
    col = np.zeros(n1)
    s_cu = 0.0
    s_uu = 0.0
    nnz = 0
    step = _block_rows(n0, n1)
    for start in range(0, n0, step):
        sl = slice(start, min(n0, start + step))
        c = _half_sq(x[sl], y)
        u = np.maximum(a[sl, None] + b[None, :] - c, 0.0) / eps
        row[sl] = u @ q
        col += p[sl] @ u
        s_cu += float(((c * u) @ q) @ p[sl])
        s_uu += float(((u * u) @ q) @ p[sl])
        nnz += int(np.count_nonzero(u))
    return row, col, s_cu, s_uu, nnz


def plan_entries(x, y, a, b, eps, drop):
    """COO triplets of the recovered density above ``drop``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n0, n1 = x.shape[0], y.shape[0]
    rows, cols, vals = [], [], []
    step = _block_rows(n0, n1)
    for start in range(0, n0, step):
        sl = slice(start, min(n0, start + step))
        u = (a[sl, None] + b[None, :] - _half_sq(x[sl], y)) / eps
        i, j = np.nonzero(u > drop)
        rows.append(i + start)
        cols.append(j)
        vals.append(u[i, j])
    if not rows:
        return np.empty(0, np.intp), np.empty(0, np.intp), np.empty(0)
    return (np.concatenate(rows).astype(np.intp),
            np.concatenate(cols).astype(np.intp),
            np.concatenate(vals))
