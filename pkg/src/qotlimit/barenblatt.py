"""Barenblatt-type candidate potentials and explicit couplings.

Building blocks, in order of use:

* dimensional constants of the truncated paraboloid ``(a - |u|^2/2)_+``;
* the local height ``C_eps(x)`` and the dual candidate
  ``(f_eps, |y|^2/2 - g)`` with ``f_eps = |x|^2/2 - g* + C_eps``;
* the symmetric kernel ``m_eps`` on source pairs, its normalisation ``xi``
  and marginal ``rho_eps``;
* the scalar root ``psi`` of a truncated-divergence marginal equation;
* the frame coupling on the boundary layer and the glass coupling that glues
  it to the interior.

All truncations ``(C - D)_+`` go through the split
``D(x, z) = [g*(x) - |x|^2/2] + |x - z|^2/2 + [g(z) - |z|^2/2]``, so the
compiled row kernels of :mod:`qotlimit.kernels` apply unchanged.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import gamma as gamma_fn
from scipy.spatial import cKDTree

from . import kernels
from .discrete_ot import exact_plan, quantile_map_1d
from .errors import (
    EmptyRegion,
    EpsTooLargeForDelta,
    MapNotInjective,
    TargetOutOfRange,
    UnsupportedDimension,
)
from .qot import Coupling

Q_MIN = 1.0 / 3.0


@dataclass(frozen=True)
class DimensionalConstants:
    """Constants of the truncated paraboloid in dimension ``d``.

    ``c_d1 = int (1 - |u|^2/2)_+ du`` and ``c_d2 = int (1 - |u|^2/2)_+^2 du``.
    ``theorem_constant`` is the closed form stated for the limit;
    ``corrected_constant = 2 (d + 2) / ((d + 4) c_d^{2/(d+2)})`` is the value
    the dual candidate and the interior plan actually produce (see the README).
    """

    d: int
    sphere_area: float
    c_d: float
    c_d1: float
    c_d2: float
    theorem_constant: float
    corrected_constant: float


def constants(d):
    if d not in (1, 2, 3):
        raise UnsupportedDimension(f"constants are tabulated for d in 1..3, got {d}")
    area = 2.0 * math.pi ** (d / 2) / gamma_fn(d / 2)
    c_d1 = 2.0 ** ((d + 2) / 2) * area / (d * (d + 2))
    c_d2 = 2.0 ** ((d + 6) / 2) * area / (d * (d + 2) * (d + 4))
    theorem = d ** ((d + 4) / (d + 2)) * (d + 2) ** (2 / (d + 2)) / area ** (2 / (d + 2))
    corrected = 2.0 * (d + 2) / ((d + 4) * c_d1 ** (2 / (d + 2)))
    return DimensionalConstants(d=d, sphere_area=area, c_d=c_d1, c_d1=c_d1, c_d2=c_d2,
                                theorem_constant=theorem, corrected_constant=corrected)


def paraboloid_integral(a, d, power):
    """Closed form of ``int_{R^d} (a - |u|^2/2)_+^power du`` for power 1 or 2."""
    k = constants(d)
    if power == 1:
        return a ** ((d + 2) / 2) * k.c_d1
    if power == 2:
        return a ** ((d + 4) / 2) * k.c_d2
    raise ValueError("power must be 1 or 2")


@dataclass(frozen=True)
class FrameSpec:
    """Split of the source nodes at distance ``delta`` from the boundary."""

    delta: float
    inner_nodes: np.ndarray
    frame_nodes: np.ndarray


def build_frame(measure, delta):
    if not delta > 0:
        raise ValueError("delta must be positive")
    dist = measure.domain.distance_to_boundary(measure.points)
    inner = np.flatnonzero(dist > delta)
    frame = np.flatnonzero(dist <= delta)
    return FrameSpec(float(delta), inner, frame)


def default_delta(measure):
    return 0.05 * float(np.min(measure.domain.extent))


# ---------------------------------------------------------------------------
# pointwise quantities

def _pts(pair, x):
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 0 or (arr.ndim == 1 and (pair.dim > 1 or arr.size == 1))
    if pair.dim == 1 and arr.ndim <= 1:
        arr = arr.reshape(-1, 1)
    return np.atleast_2d(arr), single


def local_density(pair, x):
    """``rho0(x) * rho1(grad g*(x))``."""
    return pair.rho0.pdf(x) * pair.rho1.pdf(pair.grad_g_star(x))


def c_eps(pair, x, eps):
    """Barenblatt height ``eps^{2/(d+2)} c_d^{-2/(d+2)} (rho0 rho1(grad g*))^{-1/(d+2)}``."""
    d = pair.dim
    pts, single = _pts(pair, x)
    k = constants(d)
    val = (eps ** (2 / (d + 2)) * k.c_d ** (-2 / (d + 2))
           * local_density(pair, pts) ** (-1 / (d + 2)))
    return float(val[0]) if single else val


def _alpha(pair, x):
    return pair.g_star(x) - 0.5 * np.einsum("ij,ij->i", x, x)


def _beta(pair, z):
    return 0.5 * np.einsum("ij,ij->i", z, z) - pair.g(z)


def gamma_eps(pair, eps, backend=None):
    """Dual functional at the candidate ``(f_eps, |y|^2/2 - g)`` (half-cost form).

    Returns ``int f_eps d rho0 + int (|y|^2/2 - g) d rho1
    - (1/2 eps) int int (C_eps(x) - D(x, y))_+^2 d rho0 d rho1``.
    """
    kern = kernels.get_backend(backend)
    x = np.ascontiguousarray(pair.rho0.points)
    y = np.ascontiguousarray(pair.rho1.points)
    p, q = pair.rho0.weights, pair.rho1.weights
    ce = c_eps(pair, x, eps)
    alpha = _alpha(pair, x)
    beta = _beta(pair, y)
    f_eps = -alpha + ce
    *_, s_uu, _ = kern.plan_moments(x, y, np.ascontiguousarray(ce - alpha),
                                    np.ascontiguousarray(beta), p, q, float(eps))
    return math.fsum(f_eps * p) + math.fsum(beta * q) - 0.5 * eps * s_uu


def m_eps(pair, x, xp, eps):
    """Symmetric kernel ``(1/2 eps)(C(x) + C(x') - |x-x'|^2_H(x)/2 - |x-x'|^2_H(x')/2)_+``."""
    xs, sx = _pts(pair, x)
    xps, sp = _pts(pair, xp)
    xs, xps = np.broadcast_arrays(xs, xps)
    val = _m_values(pair, xs, xps, c_eps(pair, xs, eps), c_eps(pair, xps, eps), eps)
    return float(val[0]) if (sx and sp) else val


def _m_values(pair, x, xp, cx, cxp, eps, hx=None, hxp=None):
    diff = x - xp
    hx = pair.hess_g_star(x) if hx is None else hx
    hxp = pair.hess_g_star(xp) if hxp is None else hxp
    qx = 0.5 * np.einsum("ni,nij,nj->n", diff, hx, diff)
    qxp = 0.5 * np.einsum("ni,nij,nj->n", diff, hxp, diff)
    return np.maximum((cx + cxp) - (qx + qxp), 0.0) / (2.0 * eps)


def support_radius(pair, eps):
    """Radius bounding ``|x - x'|`` on the support of ``m_eps``."""
    cmax = float(np.max(c_eps(pair, pair.rho0.points, eps)))
    return math.sqrt(2.0 * cmax / pair.sigma_m)


@dataclass(frozen=True)
class XiResult:
    """Normalised symmetric density ``xi`` on source pairs and its marginal.

    ``xi`` is a CSR matrix; ``rho_eps[i] = sum_j xi_ij p_j``; ``norm`` is
    ``sum m p p`` used for normalisation.
    """

    xi: sparse.csr_matrix
    rho_eps: np.ndarray
    col_marginal: np.ndarray
    norm: float
    radius: float
    eps: float

    def total_mass(self, p):
        return math.fsum(self.rho_eps * p)


def _symmetric_pairs(points, radius):
    tree = cKDTree(points)
    pairs = tree.query_pairs(radius * (1 + 1e-12), output_type="ndarray")
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return pairs


def xi_and_marginal(pair, eps):
    """Assemble ``xi = m / int m d(rho0 x rho0)`` as a sparse band matrix.

    Only the upper triangle is evaluated and mirrored, so the matrix is
    bitwise symmetric and its row and column marginals agree exactly.
    """
    x = pair.rho0.points
    p = pair.rho0.weights
    n = len(x)
    ce = c_eps(pair, x, eps)
    hess = pair.hess_g_star(x)
    radius = support_radius(pair, eps)
    pairs = _symmetric_pairs(x, radius)
    i, j = pairs[:, 0], pairs[:, 1]
    off = _m_values(pair, x[i], x[j], ce[i], ce[j], eps, hess[i], hess[j])
    keep = off > 0
    i, j, off = i[keep], j[keep], off[keep]
    diag = ce / eps
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    vals = np.concatenate([off, off, diag])
    m = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m.sort_indices()
    norm = math.fsum(m.multiply(p[:, None]).multiply(p[None, :]).data)
    xi = m / norm
    xi = sparse.csr_matrix(xi)
    xi.sort_indices()
    rho = _row_sums(xi, p)
    col = _row_sums(sparse.csr_matrix(xi.T), p)
    return XiResult(xi=xi, rho_eps=rho, col_marginal=col, norm=norm, radius=radius,
                    eps=float(eps))


def _row_sums(mat, w):
    out = np.empty(mat.shape[0])
    indptr, indices, data = mat.indptr, mat.indices, mat.data
    for r in range(mat.shape[0]):
        sl = slice(indptr[r], indptr[r + 1])
        out[r] = math.fsum(data[sl] * w[indices[sl]])
    return out


def rho_eps_at(pair, xi_res, z):
    """``rho_eps`` at arbitrary points by quadrature over the source nodes."""
    x = pair.rho0.points
    p = pair.rho0.weights
    eps = xi_res.eps
    z = np.atleast_2d(z)
    tree = cKDTree(x)
    hood = tree.query_ball_point(z, xi_res.radius * (1 + 1e-12))
    cz = c_eps(pair, z, eps)
    cx = c_eps(pair, x, eps)
    hz = pair.hess_g_star(z)
    hx = pair.hess_g_star(x)
    out = np.empty(len(z))
    for k, idx in enumerate(hood):
        idx = np.asarray(sorted(idx), dtype=np.intp)
        if len(idx) == 0:
            out[k] = 0.0
            continue
        vals = _m_values(pair, np.repeat(z[k:k + 1], len(idx), axis=0), x[idx],
                         np.full(len(idx), cz[k]), cx[idx], eps,
                         np.repeat(hz[k:k + 1], len(idx), axis=0), hx[idx])
        out[k] = math.fsum(vals * p[idx]) / xi_res.norm
    return out


# ---------------------------------------------------------------------------
# psi and the frame coupling

@dataclass(frozen=True)
class PsiResult:
    """Roots ``psi`` on ``rows``; ``scaled_min/max`` are ``psi / eps^{2/(d+2)}``."""

    psi: np.ndarray
    rows: np.ndarray
    region: np.ndarray
    scaled_min: float
    scaled_max: float


def solve_psi(pair, s, region, eps, rows=None, backend=None):
    """Solve ``(1/eps) sum_{x' in region} (psi(x) - D(x, grad g*(x')))_+ p_x' = s(x)``.

    Parameters
    ----------
    s : float or array
        Positive target per row node.
    region : array of int
        Source node indices summed over.
    rows : array of int, optional
        Nodes where ``psi`` is wanted (defaults to ``region``).
    """
    region = np.asarray(region, dtype=np.intp)
    if region.size == 0:
        raise EmptyRegion("region has no nodes")
    rows = region if rows is None else np.asarray(rows, dtype=np.intp)
    s = np.broadcast_to(np.asarray(s, dtype=np.float64), rows.shape).copy()
    if np.any(~(s > 0)):
        raise ValueError("targets s must be strictly positive")
    kern = kernels.get_backend(backend)
    pts = pair.rho0.points
    p = pair.rho0.weights
    x = np.ascontiguousarray(pts[rows])
    z = np.ascontiguousarray(pair.grad_g_star(pts[region]))
    beta = np.ascontiguousarray(_beta(pair, z))
    w = np.ascontiguousarray(p[region])
    r, _, _ = kern.row_roots(x, z, beta, w, eps * s, np.full(len(rows), np.nan))
    psi = r + _alpha(pair, x)
    scale = eps ** (2 / (pair.dim + 2))
    return PsiResult(psi=psi, rows=rows, region=region,
                     scaled_min=float(psi.min() / scale),
                     scaled_max=float(psi.max() / scale))


def _truncated_divergence(pair, level, rows, cols, eps):
    """Sparse ``M[a, b] = (level[a] - D(x_a, grad g*(x_b)))_+ / eps`` over rows x cols."""
    pts = pair.rho0.points
    x = np.ascontiguousarray(pts[rows])
    z = np.ascontiguousarray(pair.grad_g_star(pts[cols]))
    a = np.ascontiguousarray(level - _alpha(pair, x))
    b = np.ascontiguousarray(_beta(pair, z))
    r, c, v = kernels.plan_entries(x, z, a, b, float(eps), 0.0)
    return sparse.csr_matrix((v, (r, c)), shape=(len(rows), len(cols)))


@dataclass(frozen=True)
class FrameCoupling:
    """Symmetric density ``h`` on frame x frame (local indices into ``nodes``)."""

    h: sparse.csr_matrix
    nodes: np.ndarray
    q: np.ndarray
    psi: PsiResult
    M: sparse.csr_matrix

    def marginal(self, p):
        return _row_sums(self.h, p[self.nodes])


def frame_coupling(pair, frame, q, eps, backend=None):
    """``h(x, x') = sum_z M(x', z) M(x, z) / (sum_v M(v, z) p_v) p_z`` on the frame.

    ``M(a, b) = (c(a) - D(a, grad g*(b)))_+ / eps`` with ``c`` from
    :func:`solve_psi` (target ``q``, region = frame), so that
    ``sum_x' h(x, x') p_x' = q(x)`` exactly.

    Raises
    ------
    TargetOutOfRange
        If some ``q`` lies outside ``[1/3, 1]``.
    """
    nodes = np.asarray(frame.frame_nodes, dtype=np.intp)
    if nodes.size == 0:
        raise EmptyRegion("frame has no nodes")
    q = np.broadcast_to(np.asarray(q, dtype=np.float64), nodes.shape).copy()
    bad = (q < Q_MIN - 1e-12) | (q > 1.0 + 1e-12)
    if np.any(bad):
        raise TargetOutOfRange(
            f"{int(bad.sum())} frame targets outside [1/3, 1] "
            f"(range [{q.min():.4g}, {q.max():.4g}])")
    psi = solve_psi(pair, q, nodes, eps, backend=backend)
    M = _truncated_divergence(pair, psi.psi, nodes, nodes, eps)
    p = pair.rho0.weights[nodes]
    colsum = np.asarray(M.T @ p).ravel()
    scale = np.divide(p, colsum, out=np.zeros_like(p), where=colsum > 0)
    h = (M @ sparse.diags(scale) @ M.T).tocsr()
    h = 0.5 * (h + h.T)
    h = sparse.csr_matrix(h)
    h.sort_indices()
    return FrameCoupling(h=h, nodes=nodes, q=q, psi=psi, M=M)


# ---------------------------------------------------------------------------
# the glass coupling

@dataclass(frozen=True)
class GlassCoupling:
    """Assembled coupling on source x source plus diagnostics.

    ``coupling`` is to be read against ``rho0 x rho0`` with column points mapped
    by ``grad g*`` (see :meth:`target_points`).
    """

    coupling: Coupling
    frame: FrameSpec
    frame_part: FrameCoupling
    xi: XiResult
    map_points: np.ndarray
    map_deviation: float
    row_defect: float
    col_defect: float
    support_violation: float

    def target_points(self, pair):
        pts = pair.rho0.points
        return pair.grad_g_star(pts), pair.rho0.weights


def _map_1d(pair, xi_res):
    x = pair.rho0.points[:, 0]
    p = pair.rho0.weights
    phi = quantile_map_1d(x, p, x, xi_res.rho_eps * p)
    if np.any(np.diff(phi) <= 0):
        raise MapNotInjective("quantile map is not strictly increasing")
    return phi[:, None]


def _map_coarse(pair, xi_res, coarse):
    # exact plan between aggregated measures, barycentric projection, then
    # multilinear interpolation of the displacement back to the fine nodes
    from scipy.interpolate import RegularGridInterpolator

    dom = pair.rho0.domain
    d = dom.dim
    x = pair.rho0.points
    p = pair.rho0.weights
    n_c = [min(coarse, n) for n in dom.n]
    coarse_dom = dom.with_n(n_c)
    cidx = np.zeros(len(x), dtype=np.intp)
    for k in range(d):
        ck = np.minimum(((x[:, k] - dom.lo[k]) / dom.extent[k] * n_c[k]).astype(np.intp),
                        n_c[k] - 1)
        cidx = cidx * n_c[k] + ck
    ncell = int(np.prod(n_c))
    w_src = np.bincount(cidx, weights=p, minlength=ncell)
    w_dst = np.bincount(cidx, weights=p * xi_res.rho_eps, minlength=ncell)
    cen = np.stack([np.bincount(cidx, weights=p * x[:, k], minlength=ncell) / w_src
                    for k in range(d)], axis=1)
    cen_dst = np.stack([np.bincount(cidx, weights=p * xi_res.rho_eps * x[:, k],
                                    minlength=ncell) / w_dst for k in range(d)], axis=1)
    _, plan = exact_plan(cen, cen_dst, w_src, w_dst)
    plan = plan.tocsr()
    mass = np.asarray(plan.sum(axis=1)).ravel()
    bary = (plan @ cen_dst) / mass[:, None]
    disp = (bary - cen).reshape(*n_c, d)
    interp = RegularGridInterpolator(coarse_dom.axes(), disp, bounds_error=False,
                                     fill_value=None)
    phi = x + interp(x)
    lo, hi = np.asarray(dom.lo), np.asarray(dom.hi)
    phi = np.clip(phi, lo, hi)
    _check_injective(phi, dom)
    return phi


def _check_injective(phi, dom):
    grid = phi.reshape(*dom.n, dom.dim)
    jac = np.empty(tuple(n - 1 for n in dom.n) + (dom.dim, dom.dim))
    for k in range(dom.dim):
        sl_hi = [slice(0, -1)] * dom.dim
        sl_hi[k] = slice(1, None)
        diff = grid[tuple(sl_hi)] - grid[tuple([slice(0, -1)] * dom.dim)]
        jac[..., :, k] = diff
    det = np.linalg.det(jac.reshape(-1, dom.dim, dom.dim))
    if np.any(det <= 0):
        raise MapNotInjective(f"discrete map folds over on {int((det <= 0).sum())} cells")


def glass_coupling(pair, frame, eps, coarse=12, support_check="raise", backend=None):
    """Feasible coupling built from ``xi`` in the interior and ``h`` on the frame.

    ``u(x, x') = xi(phi(x), phi(x')) / (rho_eps(phi(x)) rho_eps(phi(x')))`` where
    ``phi`` pushes ``rho0`` to ``rho_eps rho0`` (exact quantile map in 1-D,
    coarse exact plan plus interpolation otherwise).  ``u`` is kept on pairs
    touching the interior; the frame block is replaced by
    :func:`frame_coupling` with ``q = 1 - (interior mass of u)``.

    Parameters
    ----------
    support_check : {"raise", "warn", "off"}
        What to do when the kernel support from interior rows reaches the
        boundary layer of width ``delta/4``.

    Raises
    ------
    EpsTooLargeForDelta
        Support check failed and ``support_check == "raise"``.
    TargetOutOfRange
        The frame targets left over by the interior part leave ``[1/3, 1]``.
    MapNotInjective
    """
    if len(frame.inner_nodes) == 0:
        raise EmptyRegion("no interior nodes at this delta")
    pts = pair.rho0.points
    p = pair.rho0.weights
    n = len(pts)
    xi_res = xi_and_marginal(pair, eps)
    radius = xi_res.radius

    dom = pair.rho0.domain
    reach = float(np.min(dom.distance_to_boundary(pts[frame.inner_nodes]))) - radius
    violation = max(0.0, frame.delta / 4 - reach)
    if violation > 0 and support_check != "off":
        msg = (f"kernel support radius {radius:.4g} leaves a margin of {reach:.4g} "
               f"between interior rows and the boundary (need delta/4 = "
               f"{frame.delta / 4:.4g}; decrease eps or increase delta)")
        if support_check == "raise":
            raise EpsTooLargeForDelta(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    if pair.dim == 1:
        phi = _map_1d(pair, xi_res)
    else:
        phi = _map_coarse(pair, xi_res, coarse)
    map_dev = float(np.max(np.linalg.norm(phi - pts, axis=1)))

    rho_phi = rho_eps_at(pair, xi_res, phi)
    cphi = c_eps(pair, phi, eps)
    hphi = pair.hess_g_star(phi)
    pairs = _symmetric_pairs(phi, radius)
    i, j = pairs[:, 0], pairs[:, 1]
    is_inner = np.zeros(n, dtype=bool)
    is_inner[frame.inner_nodes] = True
    touch = is_inner[i] | is_inner[j]
    i, j = i[touch], j[touch]
    mval = _m_values(pair, phi[i], phi[j], cphi[i], cphi[j], eps, hphi[i], hphi[j])
    u_off = mval / xi_res.norm / (rho_phi[i] * rho_phi[j])
    keep = u_off > 0
    i, j, u_off = i[keep], j[keep], u_off[keep]
    diag_nodes = frame.inner_nodes
    u_diag = (cphi[diag_nodes] / eps) / xi_res.norm / rho_phi[diag_nodes] ** 2

    rows = np.concatenate([i, j, diag_nodes])
    cols = np.concatenate([j, i, diag_nodes])
    vals = np.concatenate([u_off, u_off, u_diag])
    u = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))

    # frame rows: mass already placed on interior columns
    fnodes = frame.frame_nodes
    inner_mass = np.asarray(u[fnodes][:, frame.inner_nodes] @ p[frame.inner_nodes]).ravel()
    q = 1.0 - inner_mass
    fc = frame_coupling(pair, frame, q, eps, backend=backend)
    hc = fc.h.tocoo()
    full = u + sparse.csr_matrix((hc.data, (fnodes[hc.row], fnodes[hc.col])),
                                 shape=(n, n))
    full = full.tocoo()
    full.sum_duplicates()
    pos = full.data > 0
    order = np.lexsort((full.col[pos], full.row[pos]))
    coupling = Coupling(full.row[pos][order].astype(np.intp),
                        full.col[pos][order].astype(np.intp),
                        full.data[pos][order], (n, n), float(eps))
    row_def, col_def = coupling.marginal_defect(p, p)
    return GlassCoupling(coupling=coupling, frame=frame, frame_part=fc, xi=xi_res,
                         map_points=phi, map_deviation=map_dev, row_defect=row_def,
                         col_defect=col_def, support_violation=violation)


# ---------------------------------------------------------------------------

def corollary_profile_v(pair, t, x, xp, convention="printed"):
    """Barenblatt-shaped profile centred at ``xp``.

    ``(1/t) (K(t, xp) - |x - xp|^2_{H(xp)} / 2)_+`` with ``H = hess g*`` and

    * ``convention="printed"``: ``K = c_d t^{2/(d+2)} / rho(xp)^{1/(d+2)}``;
    * ``convention="matched"``: ``K = C_t(xp)``, the height used by the
      dual candidate, i.e. ``t^{2/(d+2)} c_d^{-2/(d+2)} rho(xp)^{-1/(d+2)}``;

    where ``rho(xp) = rho0(xp) rho1(grad g*(xp))``.  Only the matched form
    has unit mass in ``x`` and follows the solver plan (see the README).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    d = pair.dim
    xs, sx = _pts(pair, x)
    xps, sp = _pts(pair, xp)
    xs, xps = np.broadcast_arrays(xs, xps)
    rho = local_density(pair, xps)
    if convention == "printed":
        height = constants(d).c_d * t ** (2 / (d + 2)) / rho ** (1 / (d + 2))
    elif convention == "matched":
        height = c_eps(pair, xps, t)
    else:
        raise ValueError("convention must be 'printed' or 'matched'")
    diff = xs - xps
    quad = 0.5 * np.einsum("ni,nij,nj->n", diff, pair.hess_g_star(xps), diff)
    val = np.maximum(height - quad, 0.0) / t
    return float(val[0]) if (sx and sp) else val
