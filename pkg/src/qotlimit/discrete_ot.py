"""Unregularized squared Wasserstein distance baselines.

Three routes: the 1-D quantile formula on the atomic measures, quadrature of
the analytic map displacement, and an exact vertex solution of the discrete
Kantorovich problem for small instances.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from .errors import DimensionMismatch, TooLarge
from .measures import integrate

DEFAULT_MAX_POINTS = 400


@dataclass(frozen=True)
class ExactOTResult:
    """Value of ``W_2^2`` together with how it was obtained.

    ``support_size`` is only filled by ``exact_lp`` (zero otherwise).
    """

    value: float
    method: str
    support_size: int = 0


def _atoms(measure):
    if hasattr(measure, "points"):
        return np.asarray(measure.points), np.asarray(measure.weights)
    pts, w = measure
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts, np.asarray(w, dtype=float)


def w2_quantile_1d(rho0, rho1):
    """Exact ``W_2^2`` between the atomic measures on two 1-D grids.

    The two cumulative distribution functions are merged into one list of
    levels; on each piece between consecutive levels both quantile functions
    are constant, so the integral ``int_0^1 (F0^-1 - F1^-1)^2 dt`` is a finite
    sum.  Coincident levels produce zero-width pieces, which are dropped, so
    ties never affect the value.
    """
    x, p = _atoms(rho0)
    y, q = _atoms(rho1)
    if x.shape[1] != 1 or y.shape[1] != 1:
        raise DimensionMismatch("the quantile formula needs one-dimensional measures")
    ox = np.argsort(x[:, 0], kind="stable")
    oy = np.argsort(y[:, 0], kind="stable")
    xs, ys = x[ox, 0], y[oy, 0]
    F0 = np.cumsum(p[ox]) / p.sum()
    F1 = np.cumsum(q[oy]) / q.sum()
    F0[-1] = F1[-1] = 1.0
    levels = np.union1d(F0, F1)
    widths = np.diff(np.concatenate([[0.0], levels]))
    keep = widths > 0
    mids = (levels - 0.5 * widths)[keep]
    i = np.minimum(np.searchsorted(F0, mids, side="right"), len(xs) - 1)
    j = np.minimum(np.searchsorted(F1, mids, side="right"), len(ys) - 1)
    value = float(np.dot(widths[keep], (xs[i] - ys[j]) ** 2))
    return ExactOTResult(value=value, method="quantile1d")


def quantile_map_1d(src_points, src_weights, dst_points, dst_weights, at=None):
    """Monotone rearrangement between two cell-centred 1-D histograms.

    Each measure is read as piecewise constant over its cells (edges halfway
    between nodes), so the map is continuous and strictly increasing.  Returns
    the image of ``at`` (default: the source nodes).
    """
    xs = np.asarray(src_points, dtype=float).reshape(-1)
    ys = np.asarray(dst_points, dtype=float).reshape(-1)
    ex = _cell_edges(xs)
    ey = _cell_edges(ys)
    F0 = np.concatenate([[0.0], np.cumsum(src_weights)]) / np.sum(src_weights)
    F1 = np.concatenate([[0.0], np.cumsum(dst_weights)]) / np.sum(dst_weights)
    at = xs if at is None else np.asarray(at, dtype=float).reshape(-1)
    levels = np.interp(at, ex, F0)
    return np.interp(levels, F1, ey)


def _cell_edges(nodes):
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    if len(nodes) == 1:
        return np.array([nodes[0] - 0.5, nodes[0] + 0.5])
    first = nodes[0] - (mids[0] - nodes[0])
    last = nodes[-1] + (nodes[-1] - mids[-1])
    return np.concatenate([[first], mids, [last]])


def w2_from_map(pair):
    """``int ||x - grad g*(x)||^2 d rho0`` by midpoint quadrature."""
    def sq(x):
        disp = x - pair.grad_g_star(x)
        return np.einsum("ij,ij->i", disp, disp)

    return ExactOTResult(value=integrate(pair.rho0, sq), method="analytic_map")


def exact_plan(x, y, p, q):
    """Optimal plan of the discrete problem with cost ``||x - y||^2``.

    Solved by HiGHS (interior point followed by crossover), which returns a
    basic optimal solution, i.e. a vertex of the transport polytope.  The
    dual simplex gives the same vertex value but is several times slower on
    the highly degenerate grid instances used here.

    Returns
    -------
    value : float
    plan : scipy.sparse.coo_matrix
        Transported masses; at most ``n0 + n1 - 1`` nonzeros.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n0, n1 = len(x), len(y)
    cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1).ravel()
    rows = sparse.kron(sparse.eye(n0), np.ones((1, n1)))
    cols = sparse.kron(np.ones((1, n0)), sparse.eye(n1))
    a_eq = sparse.vstack([rows, cols]).tocsr()
    q_scaled = np.asarray(q, dtype=float) * (np.sum(p) / np.sum(q))
    b_eq = np.concatenate([p, q_scaled])
    res = optimize.linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
                           method="highs-ipm")
    if res.status != 0:
        raise RuntimeError(f"linear program failed: {res.message}")
    mass = np.where(res.x > 1e-15, res.x, 0.0).reshape(n0, n1)
    plan = sparse.coo_matrix(mass)
    return float(cost @ mass.ravel()), plan


def w2_exact_small(rho0, rho1, max_points=DEFAULT_MAX_POINTS):
    """Exact discrete ``W_2^2`` by linear programming (small instances only).

    Raises
    ------
    TooLarge
        If ``n0 * n1 > max_points**2``.
    """
    x, p = _atoms(rho0)
    y, q = _atoms(rho1)
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch("measures live in different dimensions")
    if len(x) * len(y) > max_points ** 2:
        raise TooLarge(f"{len(x)} x {len(y)} nodes exceeds the cap {max_points}^2")
    value, plan = exact_plan(x, y, p, q)
    return ExactOTResult(value=value, method="exact_lp", support_size=int(plan.nnz))
