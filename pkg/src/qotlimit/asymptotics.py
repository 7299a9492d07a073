"""Small-regularisation experiments: sweeps, fits and the lower/upper sandwich."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from scipy.spatial import cKDTree

from .barenblatt import (
    build_frame,
    c_eps,
    constants,
    corollary_profile_v,
    gamma_eps,
    glass_coupling,
)
from .discrete_ot import w2_from_map, w2_quantile_1d
from .errors import BandwidthUnderResolved
from .measures import integrate
from .qot import primal_objective, solve

MIN_CELLS_PER_BAND = 10.0

CSV_COLUMNS = ("eps", "T_eps", "w2", "gap", "scaled_gap", "lower", "upper",
               "support_fraction", "iterations", "row_defect", "primal_dual_gap")


@dataclass
class RateReport:
    """One row per ``eps`` plus the fitted rate and constant."""

    label: str
    d: int
    eps_list: np.ndarray
    gaps: np.ndarray
    scaled_gaps: np.ndarray
    fitted_exponent: float
    fitted_constant: float
    theoretical_constant: float
    corrected_constant: float
    w2: float
    values: np.ndarray
    lower_curve: np.ndarray = None
    upper_curve: np.ndarray = None
    support_fractions: np.ndarray = None
    iterations: np.ndarray = None
    row_defects: np.ndarray = None
    duality_gaps: np.ndarray = None
    fit_gamma: float = float("nan")
    extra: dict = field(default_factory=dict)

    def rows(self):
        n = len(self.eps_list)

        def col(arr):
            return np.full(n, np.nan) if arr is None else np.asarray(arr, dtype=float)

        return np.column_stack([
            self.eps_list, self.values, np.full(n, self.w2), self.gaps,
            self.scaled_gaps, col(self.lower_curve), col(self.upper_curve),
            col(self.support_fractions), col(self.iterations), col(self.row_defects),
            col(self.duality_gaps)])

    def summary(self):
        return {
            "label": self.label, "d": self.d,
            "fitted_exponent": self.fitted_exponent,
            "expected_exponent": 2.0 / (self.d + 2),
            "fitted_constant": self.fitted_constant,
            "fit_gamma": self.fit_gamma,
            "theoretical_constant": self.theoretical_constant,
            "corrected_constant": self.corrected_constant,
            "relative_error_theorem": self.fitted_constant / self.theoretical_constant - 1,
            "relative_error_corrected": self.fitted_constant / self.corrected_constant - 1,
            **self.extra,
        }


def density_integral(pair):
    """``int (rho0 rho1(grad g*))^{-1/(d+2)} d rho0``."""
    d = pair.dim

    def f(x):
        return (pair.rho0.pdf(x) * pair.rho1.pdf(pair.grad_g_star(x))) ** (-1 / (d + 2))

    return integrate(pair.rho0, f)


def theoretical_limit(pair, constant="theorem"):
    """Predicted limit of ``(T_eps - W_2^2) / eps^{2/(d+2)}``.

    ``constant="theorem"`` uses the closed-form constant as stated;
    ``"corrected"`` uses ``2(d+2)/((d+4) c_d^{2/(d+2)})``.
    """
    k = constants(pair.dim)
    if constant == "theorem":
        c = k.theorem_constant
    elif constant == "corrected":
        c = k.corrected_constant
    else:
        raise ValueError("constant must be 'theorem' or 'corrected'")
    return c * density_integral(pair)


def w2_baseline(pair):
    """Exact discrete value in 1-D, analytic-map quadrature otherwise."""
    if pair.dim == 1:
        return w2_quantile_1d(pair.rho0, pair.rho1).value
    return w2_from_map(pair).value


def check_bandwidth(pair, eps):
    dom = pair.rho0.domain
    cells = np.asarray(dom.n) * eps ** (1 / (pair.dim + 2)) / dom.extent
    if cells.min() < MIN_CELLS_PER_BAND:
        raise BandwidthUnderResolved(
            f"only {cells.min():.3g} cells across the plan bandwidth at eps={eps:g}; "
            f"need {MIN_CELLS_PER_BAND:g} (refine the grid or raise eps)")
    return float(cells.min())


def parse_eps_list(eps_list):
    eps = np.asarray([float(e) for e in eps_list])
    if len(eps) < 3:
        raise ValueError("a sweep needs at least three eps values")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("eps values must be positive and strictly decreasing")
    return eps


def fit_exponent(eps, gaps):
    """Least-squares slope of ``log gap`` against ``log eps`` on the last half."""
    k = int(math.ceil(len(eps) / 2))
    e, g = np.log(eps[-k:]), np.log(gaps[-k:])
    return float(np.polyfit(e, g, 1)[0])


def fit_constant(eps, scaled):
    """Fit ``scaled = K + c eps^gamma`` with free ``gamma``; returns ``(K, gamma)``.

    With fewer than four points the correction order is not identifiable and
    the smallest-``eps`` value is returned with ``gamma = nan``.
    """
    eps = np.asarray(eps, dtype=float)
    scaled = np.asarray(scaled, dtype=float)
    if len(eps) < 4:
        return float(scaled[-1]), float("nan")
    e0 = eps[0]

    def model(e, K, c, gam):
        return K + c * (e / e0) ** gam

    guess = (scaled[-1], scaled[0] - scaled[-1], 0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            popt, _ = curve_fit(model, eps, scaled, p0=guess,
                                bounds=([-np.inf, -np.inf, 0.02], [np.inf, np.inf, 3.0]),
                                maxfev=20000)
        except RuntimeError:
            return float(scaled[-1]), float("nan")
    return float(popt[0]), float(popt[2])


def sweep(pair, eps_list, tol=1e-8, max_iter=20000, backend=None, check=True,
          progress=None):
    """Solve at every ``eps`` and fit the rate and the limit constant.

    Parameters
    ----------
    pair : AnalyticPair
    eps_list : sequence of float
        Strictly decreasing, at least three entries.
    tol, max_iter, backend
        Passed to :func:`qotlimit.qot.solve`.
    check : bool
        Enforce the bandwidth resolution rule.
    progress : callable, optional
        Called with ``(eps, stats)`` after each solve.

    Raises
    ------
    BandwidthUnderResolved
    """
    eps = parse_eps_list(eps_list)
    if check:
        for e in eps:
            check_bandwidth(pair, e)
    stats = []
    for e in eps:
        sol = solve(pair.rho0, pair.rho1, e, tol=tol, max_iter=max_iter,
                    keep_plan=False, backend=backend)
        stats.append(sol.stats)
        if progress is not None:
            progress(e, sol.stats)
    return assemble_report(pair, eps, stats)


def assemble_report(pair, eps, stats):
    """Build a :class:`RateReport` from per-``eps`` solver statistics.

    ``stats`` must be ordered like ``eps``; sweeps computed elsewhere (e.g.
    in worker processes) are aggregated through here.
    """
    eps = np.asarray(eps, dtype=float)
    w2 = w2_baseline(pair)
    d = pair.dim
    vals = np.asarray([st.dual for st in stats])
    gaps = vals - w2
    scaled = gaps / eps ** (2 / (d + 2))
    K, gam = fit_constant(eps, scaled)
    k = constants(d)
    integral = density_integral(pair)
    return RateReport(
        label=pair.label, d=d, eps_list=eps, gaps=gaps, scaled_gaps=scaled,
        fitted_exponent=fit_exponent(eps, gaps), fitted_constant=K, fit_gamma=gam,
        theoretical_constant=k.theorem_constant * integral,
        corrected_constant=k.corrected_constant * integral, w2=w2, values=vals,
        support_fractions=np.asarray([st.support_fraction for st in stats]),
        iterations=np.asarray([st.iterations for st in stats]),
        row_defects=np.asarray([max(st.row_defect, st.col_defect) for st in stats]),
        duality_gaps=np.asarray([st.primal - st.dual for st in stats]))


def lower_value(pair, eps, w2=None):
    """``(2 Gamma_eps - W_2^2) / eps^{2/(d+2)}`` at the Barenblatt candidate."""
    w2 = w2_from_map(pair).value if w2 is None else w2
    return (2.0 * gamma_eps(pair, eps) - w2) / eps ** (2 / (pair.dim + 2))


def upper_value(pair, eps, delta, support_check="raise", coarse=12):
    """``(cost of the glass coupling - W_2^2) / eps^{2/(d+2)}`` and the coupling."""
    frame = build_frame(pair.rho0, delta)
    gc = glass_coupling(pair, frame, eps, coarse=coarse, support_check=support_check)
    cost = primal_objective(gc.coupling, pair.rho0, gc.target_points(pair))
    w2 = w2_from_map(pair).value
    return (cost - w2) / eps ** (2 / (pair.dim + 2)), gc


def sandwich(pair, delta, eps_list, tol=1e-8, max_iter=20000, support_check="raise",
             coarse=12, backend=None, check=True, report=None):
    """Sweep plus the dual-candidate lower curve and glass-coupling upper curve.

    An existing sweep ``report`` over the same ``eps_list`` may be passed to
    skip the solves.
    """
    if report is None:
        rep = sweep(pair, eps_list, tol=tol, max_iter=max_iter, backend=backend,
                    check=check)
    else:
        rep = report
    w2_map = w2_from_map(pair).value
    lower, upper, defects = [], [], []
    for e in rep.eps_list:
        lower.append(lower_value(pair, e, w2_map))
        up, gc = upper_value(pair, e, delta, support_check=support_check, coarse=coarse)
        upper.append(up)
        defects.append(max(gc.row_defect, gc.col_defect))
    rep.lower_curve = np.asarray(lower)
    rep.upper_curve = np.asarray(upper)
    rep.extra.update(delta=float(delta),
                     glass_marginal_defect=float(np.max(defects)))
    return rep


def _preimages(pair, cols):
    y = pair.rho1.points[cols]
    return np.atleast_2d(pair.grad_g(y)).reshape(len(cols), pair.dim)


def corollary_deviation(pair, plan, eps, convention="matched"):
    """Weighted L1 distance between the plan and the Barenblatt profiles.

    ``sum_j q_j sum_i |u_ij - v(eps, x_i; grad g(y_j))| p_i``, taken over the
    union of both supports.  Each column of ``u`` has unit mass against ``p``,
    so the value is an averaged relative deviation (0 means identical, 2
    means disjoint).
    """
    x, p = pair.rho0.points, pair.rho0.weights
    q = pair.rho1.weights
    n1 = len(q)
    cols = np.arange(n1)
    xp = _preimages(pair, cols)
    height = np.atleast_1d(c_eps(pair, xp, eps))
    if convention == "printed":
        d = pair.dim
        height = height * constants(d).c_d ** ((d + 4) / (d + 2))
    lam = min(pair.sigma_m, 1.0)
    radius = np.sqrt(2.0 * height.max() / lam) * (1 + 1e-9)
    tree = cKDTree(x)
    hits = tree.query_ball_point(xp, radius)
    vi = np.concatenate([np.asarray(h, dtype=np.intp) for h in hits])
    vj = np.repeat(cols, [len(h) for h in hits])
    key_plan = plan.cols.astype(np.int64) * len(x) + plan.rows
    key_v = vj.astype(np.int64) * len(x) + vi
    keys = np.union1d(key_plan, key_v)
    jj, ii = np.divmod(keys, len(x))
    u = np.zeros(len(keys))
    u[np.searchsorted(keys, key_plan)] = plan.values
    v = corollary_profile_v(pair, eps, x[ii], xp[jj], convention=convention)
    return math.fsum(np.abs(u - v) * p[ii] * q[jj])


def cross_section(pair, plan, eps, j=None):
    """Plan column ``u(., y_j)`` next to both Barenblatt conventions.

    The column defaults to the target node nearest the centre of the target
    grid.  In ``d > 1`` the section runs along the first axis through the
    source node nearest ``grad g(y_j)``.  Returns a dict of equal-length arrays
    ``x_1, plan, v_matched, v_printed`` sorted by ``x_1``.
    """
    y = pair.rho1.points
    x = pair.rho0.points
    if j is None:
        centre = 0.5 * (np.asarray(pair.rho1.domain.lo) + np.asarray(pair.rho1.domain.hi))
        j = int(np.argmin(np.einsum("ij,ij->i", y - centre, y - centre)))
    xp = _preimages(pair, np.array([j]))[0]
    line = np.ones(len(x), dtype=bool)
    for k in range(1, pair.dim):
        coord = x[:, k]
        nearest = coord[np.argmin(np.abs(coord - xp[k]))]
        line &= coord == nearest
    idx = np.flatnonzero(line)
    dense = np.zeros(len(x))
    sel = plan.cols == j
    dense[plan.rows[sel]] = plan.values[sel]
    xs = x[idx]
    out = {"x_1": xs[:, 0], "plan": dense[idx],
           "v_matched": corollary_profile_v(pair, eps, xs, np.broadcast_to(xp, xs.shape),
                                            convention="matched"),
           "v_printed": corollary_profile_v(pair, eps, xs, np.broadcast_to(xp, xs.shape),
                                            convention="printed")}
    keep = (out["plan"] > 0) | (out["v_matched"] > 0) | (out["v_printed"] > 0)
    order = np.argsort(out["x_1"][keep])
    return {k: np.asarray(v)[keep][order] for k, v in out.items()}


def write_report_csv(report, path, header_lines=()):
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for key, val in report.summary().items():
            fh.write(f"# summary {key} = {_plain(val)}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in report.rows():
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_summary(report, path, header_lines=()):
    """Flat ``key = value`` file with the fitted and predicted constants."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for key, val in report.summary().items():
            fh.write(f"{key} = {_plain(val)}\n")


def _plain(v):
    if isinstance(v, (bool, str)):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _fmt(v):
    return "" if v != v else repr(float(v))


def read_report_csv(path):
    """Columns of a report CSV as a dict of arrays (comment lines skipped)."""
    return read_csv_columns(path)


def read_csv_columns(path):
    """Columns of a CSV written by this package, skipping ``#`` header lines."""
    with open(path, encoding="utf-8") as fh:
        body = [ln for ln in fh if not ln.startswith("#")]
    data = np.genfromtxt(body, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}
