"""Quadratically regularized optimal transport on grids.

The primal problem is

    T_eps = min_u  sum_ij ||x_i - y_j||^2 u_ij p_i q_j + eps sum_ij u_ij^2 p_i q_j

over densities ``u >= 0`` with unit marginals against ``p`` and ``q``.  Its
dual is handled with the half cost ``c = ||x - y||^2 / 2``:

    T_eps = 2 sup_{a,b}  sum a_i p_i + sum b_j q_j
                         - (1 / 2 eps) sum (a_i + b_j - c_ij)_+^2 p_i q_j

and the optimal density is ``u = (a + b - c)_+ / eps``.  This module is the
only place where the factor two between the conventions appears.
"""

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NoConvergence, NonFiniteValue, NotACoupling

DROP = 1e-15


def points_and_weights(measure):
    """``(points, weights)`` of a GridMeasure or of an explicit pair."""
    if hasattr(measure, "points"):
        return (np.ascontiguousarray(measure.points, dtype=np.float64),
                np.ascontiguousarray(measure.weights, dtype=np.float64))
    pts, w = measure
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    return np.ascontiguousarray(pts), np.ascontiguousarray(w, dtype=np.float64)


@dataclass(frozen=True)
class DualPotentials:
    """Dual variables ``a`` (source nodes) and ``b`` (target nodes)."""

    a: np.ndarray
    b: np.ndarray
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise NonFiniteValue("potentials must be finite")

    def shifted(self, c):
        """The gauge-equivalent pair ``(a + c, b - c)``."""
        return DualPotentials(self.a + c, self.b - c, self.eps)


@dataclass(frozen=True)
class Coupling:
    """Sparse density against ``p x q``; only positive entries are stored."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    shape: tuple
    eps: float = 0.0

    @property
    def nnz(self):
        return int(len(self.values))

    @classmethod
    def from_dense(cls, u, eps=0.0, drop=DROP):
        u = np.asarray(u, dtype=np.float64)
        i, j = np.nonzero(u > drop)
        return cls(i.astype(np.intp), j.astype(np.intp), u[i, j], u.shape, eps)

    def to_dense(self):
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.values)
        return out

    def marginals(self, p, q):
        """Row masses ``sum_j u_ij q_j`` and column masses ``sum_i u_ij p_i``."""
        row = np.bincount(self.rows, weights=self.values * q[self.cols],
                          minlength=self.shape[0])
        col = np.bincount(self.cols, weights=self.values * p[self.rows],
                          minlength=self.shape[1])
        return row, col

    def marginal_defect(self, p, q):
        row, col = self.marginals(p, q)
        return float(np.abs(row - 1).max()), float(np.abs(col - 1).max())


@dataclass
class SolveStats:
    iterations: int
    row_defect: float
    col_defect: float
    support_fraction: float
    primal: float
    dual: float
    converged: bool
    eps: float
    tol: float
    backend: str
    seconds: float
    dual_history: list = field(default_factory=list)

    def as_dict(self):
        out = asdict(self)
        out.pop("dual_history")
        return out


class QotSolution(NamedTuple):
    potentials: DualPotentials
    coupling: Coupling
    stats: SolveStats

    @property
    def value(self):
        """``T_eps`` as certified by the dual objective."""
        return self.stats.dual


def _moments(backend, x, y, a, b, p, q, eps):
    return backend.plan_moments(x, y, np.ascontiguousarray(a), np.ascontiguousarray(b),
                                p, q, float(eps))


def dual_objective(pots, rho0, rho1, backend=None):
    """``2 [sum a p + sum b q - (1/2 eps) sum (a + b - c)_+^2 p q]``."""
    x, p = points_and_weights(rho0)
    y, q = points_and_weights(rho1)
    if len(pots.a) != len(x) or len(pots.b) != len(y):
        raise DimensionMismatch("potentials do not match the grids")
    *_, s_uu, _ = _moments(kernels.get_backend(backend), x, y, pots.a, pots.b, p, q,
                           pots.eps)
    linear = math.fsum(pots.a * p) + math.fsum(pots.b * q)
    return 2.0 * (linear - 0.5 * pots.eps * s_uu)


def primal_objective(plan, rho0, rho1, eps=None):
    """``sum ||x - y||^2 u p q + eps sum u^2 p q`` with the full squared cost.

    ``eps`` defaults to ``plan.eps``.  ``rho1`` may be a ``(points, weights)``
    pair, e.g. to evaluate a coupling on the source grid mapped through
    ``grad g*``.
    """
    if plan.nnz == 0:
        raise NotACoupling("empty plan has no marginals")
    x, p = points_and_weights(rho0)
    y, q = points_and_weights(rho1)
    eps = plan.eps if eps is None else eps
    diff = x[plan.rows] - y[plan.cols]
    w = p[plan.rows] * q[plan.cols]
    transport = math.fsum(np.einsum("ij,ij->i", diff, diff) * plan.values * w)
    energy = math.fsum(plan.values ** 2 * w)
    return transport + eps * energy


def check_coupling(plan, rho0, rho1, tol):
    """Raise ``NotACoupling`` unless both marginal defects are within ``tol``."""
    if plan.nnz == 0:
        raise NotACoupling("empty plan has no marginals")
    _, p = points_and_weights(rho0)
    _, q = points_and_weights(rho1)
    row, col = plan.marginal_defect(p, q)
    if max(row, col) > tol:
        raise NotACoupling(f"marginal defects {row:.3g} / {col:.3g} exceed {tol:g}")
    return row, col


def solve(rho0, rho1, eps, tol=1e-9, max_iter=20000, *, init=None, strict=True,
          keep_plan=True, track_dual=False, backend=None):
    """Alternating exact block maximisation of the dual.

    With ``b`` fixed each ``a_i`` solves ``(1/eps) sum_j (a_i + b_j - c_ij)_+ q_j
    = 1`` exactly, and symmetrically for ``b``.  After a column update the
    column marginals are exact, so the row defect measured just before the
    next row update is the full marginal defect; iteration stops once it is at
    most ``tol`` (the un-applied row update is discarded).

    Parameters
    ----------
    rho0, rho1 : GridMeasure or (points, weights)
    eps : float
    tol : float
        Marginal defect target (sup norm).
    max_iter : int
        Number of full (row + column) sweeps allowed.
    init : DualPotentials or (a, b), optional
        Starting potentials; zeros by default.
    strict : bool
        Raise ``NoConvergence`` when the budget runs out; otherwise return the
        last iterate with ``stats.converged = False``.
    keep_plan : bool
        Materialise the sparse plan (skip for sweeps that only need values).
    track_dual : bool
        Record the dual objective after every sweep.
    backend : {"cython", "python"}, optional
        Kernel implementation; defaults to the one selected at import.

    Returns
    -------
    QotSolution
        ``(potentials, coupling, stats)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    x, p = points_and_weights(rho0)
    y, q = points_and_weights(rho1)
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch("source and target live in different dimensions")
    kern = kernels.get_backend(backend)
    name = kernels.BACKEND if backend is None else backend
    n0, n1 = len(x), len(y)
    if init is None:
        a, b = np.zeros(n0), np.zeros(n1)
    else:
        a0, b0 = (init.a, init.b) if isinstance(init, DualPotentials) else init
        a = np.array(a0, dtype=np.float64)
        b = np.array(b0, dtype=np.float64)
        if a.shape != (n0,) or b.shape != (n1,):
            raise DimensionMismatch("initial potentials do not match the grids")
    tgt0 = np.full(n0, float(eps))
    tgt1 = np.full(n1, float(eps))
    history = []
    start = time.perf_counter()
    it = 0
    converged = False
    while True:
        a_next, _, pre = kern.row_roots(x, y, b, q, tgt0, a)
        if it > 0 and float(np.max(np.abs(pre))) <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        a = a_next
        b, _, _ = kern.row_roots(y, x, a, p, tgt1, b)
        it += 1
        if track_dual:
            history.append(dual_objective(DualPotentials(a, b, eps), (x, p), (y, q),
                                          backend=name))

    row, col, s_cu, s_uu, nnz = _moments(kern, x, y, a, b, p, q, eps)
    pots = DualPotentials(a, b, float(eps))
    if keep_plan:
        r, c, v = kern.plan_entries(x, y, a, b, float(eps), DROP)
        plan = Coupling(r, c, v, (n0, n1), float(eps))
        nnz = plan.nnz
    else:
        plan = Coupling(np.empty(0, np.intp), np.empty(0, np.intp), np.empty(0),
                        (n0, n1), float(eps))
    stats = SolveStats(
        iterations=it,
        row_defect=float(np.abs(row - 1).max()),
        col_defect=float(np.abs(col - 1).max()),
        support_fraction=nnz / (n0 * n1),
        primal=2.0 * s_cu + eps * s_uu,
        dual=2.0 * (math.fsum(a * p) + math.fsum(b * q) - 0.5 * eps * s_uu),
        converged=converged, eps=float(eps), tol=float(tol), backend=name,
        seconds=time.perf_counter() - start, dual_history=history)
    sol = QotSolution(pots, plan, stats)
    if not converged and strict:
        raise NoConvergence(
            f"no convergence after {it} sweeps at eps={eps:g}: marginal defect "
            f"{max(stats.row_defect, stats.col_defect):.3g} > tol={tol:g}", result=sol)
    return sol


def support_fraction(plan):
    """Stored entries over ``n0 * n1``."""
    n0, n1 = plan.shape
    return plan.nnz / (n0 * n1)


def write_plan_csv(plan, rho0, rho1, path, header_lines=()):
    """Columns ``i, j, x_1..x_d, y_1..y_d, density``."""
    x, _ = points_and_weights(rho0)
    y, _ = points_and_weights(rho1)
    d = x.shape[1]
    cols = ["i", "j"] + [f"x_{k + 1}" for k in range(d)] + [f"y_{k + 1}" for k in range(d)]
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(cols + ["density"]) + "\n")
        for i, j, v in zip(plan.rows, plan.cols, plan.values):
            coords = [repr(float(c)) for c in x[i]] + [repr(float(c)) for c in y[j]]
            fh.write(",".join([str(int(i)), str(int(j))] + coords + [repr(float(v))]) + "\n")


def write_stats(stats, path, header_lines=()):
    """Flat ``key = value`` text file."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for key, val in stats.as_dict().items():
            fh.write(f"{key} = {json.dumps(val)}\n")
