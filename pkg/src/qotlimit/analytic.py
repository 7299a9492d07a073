"""Closed-form transport pairs and the Bregman divergence.

Every family is described by its conjugate potential ``g*`` on the source box;
the Brenier map from target to source is ``grad g`` and its inverse
``grad g*`` pushes ``rho0`` forward to ``rho1``.  All callables take ``(N, d)``
arrays and are vectorised.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite, OutOfDomain
from .measures import BoxDomain, build_grid_measure

FAMILIES = ("identity", "affine", "perturbed")

# the families are smooth, so every Hoelder exponent below one applies
_SMOOTH_ALPHA = 0.99


@dataclass(frozen=True)
class AnalyticPair:
    """A source/target pair with its exact Brenier potentials.

    Attributes
    ----------
    rho0, rho1 : GridMeasure
    g, g_star : callable
        Potential on the target box and its convex conjugate on the source box.
    grad_g, grad_g_star : callable
        Maps target -> source and source -> target.
    hess_g_star : callable
        ``(N, d, d)`` Hessians of ``g_star``.
    sigma_m, sigma_M : float
        Eigenvalue bounds of ``hess_g_star`` over the source nodes.
    alpha : float
        Hoelder exponent recorded as metadata.
    label : str
    divergence : callable or None
        Closed form of ``D(x, y)`` when one exists (avoids cancellation).
    """

    rho0: object
    rho1: object
    g: object
    g_star: object
    grad_g: object
    grad_g_star: object
    hess_g_star: object
    sigma_m: float
    sigma_M: float
    alpha: float
    label: str
    params: dict = field(default_factory=dict)
    divergence: object = field(default=None, compare=False, repr=False)

    @property
    def dim(self):
        return self.rho0.dim


def _points(v, d):
    arr = np.asarray(v, dtype=np.float64)
    single = arr.ndim == 0 or (arr.ndim == 1 and (d > 1 or arr.size == 1))
    if d == 1 and arr.ndim <= 1:
        arr = arr.reshape(-1, 1)
    else:
        arr = np.atleast_2d(arr)
    if arr.shape[-1] != d:
        raise DimensionMismatch(f"expected points of dimension {d}, got {arr.shape}")
    return arr, single


def bregman_divergence(pair, x, y, check_domain=False):
    """``D(x, y) = g*(x) + g(y) - <x, y>``, clamped at zero.

    ``x`` and ``y`` broadcast against each other.  Values in ``[-1e-10, 0)``
    are rounding noise and are clamped; anything more negative is returned
    as-is so that a broken pair shows up in tests.
    """
    d = pair.dim
    xs, single_x = _points(x, d)
    ys, single_y = _points(y, d)
    if check_domain:
        if not np.all(pair.rho0.domain.contains(xs)):
            raise OutOfDomain("x outside the source box")
        if not np.all(pair.rho1.domain.contains(ys)):
            raise OutOfDomain("y outside the target box")
    if pair.divergence is not None:
        val = pair.divergence(xs, ys)
    else:
        xs_b, ys_b = np.broadcast_arrays(xs, ys)
        flat_x = xs_b.reshape(-1, d)
        flat_y = ys_b.reshape(-1, d)
        val = (pair.g_star(flat_x) + pair.g(flat_y)
               - np.einsum("ij,ij->i", flat_x, flat_y)).reshape(xs_b.shape[:-1])
    val = np.where((val < 0) & (val >= -1e-10), 0.0, val)
    if single_x and single_y:
        return float(np.asarray(val).reshape(-1)[0])
    return val


def quadratic_divergence(pair, x, xp):
    """``0.5 <x - xp, hess_g_star(x) (x - xp)>``."""
    d = pair.dim
    xs, single_x = _points(x, d)
    xps, single_p = _points(xp, d)
    xs, xps = np.broadcast_arrays(xs, xps)
    flat_x = xs.reshape(-1, d)
    diff = flat_x - xps.reshape(-1, d)
    hess = pair.hess_g_star(flat_x)
    val = 0.5 * np.einsum("ni,nij,nj->n", diff, hess, diff).reshape(xs.shape[:-1])
    if single_x and single_p:
        return float(val.reshape(-1)[0])
    return val


def _as_axis_vector(v, d, name):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(d, float(arr))
    if arr.ndim == 2:
        if arr.shape != (d, d):
            raise DimensionMismatch(f"{name} must be {d}x{d}")
        if not np.allclose(arr, arr.T):
            raise NotPositiveDefinite(f"{name} is not symmetric")
        if np.any(np.abs(arr - np.diag(np.diag(arr))) > 0):
            raise ValueError(
                f"{name} must be diagonal so that the target support stays a box")
        return np.diag(arr).copy()
    if arr.shape != (d,):
        raise DimensionMismatch(f"{name} must have {d} entries")
    return arr.copy()


def _identity(rho0):
    def g(y):
        return 0.5 * np.einsum("ij,ij->i", y, y)

    def grad(y):
        return np.array(y, dtype=np.float64)

    def hess(x):
        n, d = np.shape(x)
        return np.broadcast_to(np.eye(d), (n, d, d)).copy()

    def div(x, y):
        diff = x - y
        return 0.5 * np.einsum("...k,...k->...", diff, diff)

    return dict(rho1=rho0, g=g, g_star=g, grad_g=grad, grad_g_star=grad,
                hess_g_star=hess, sigma_m=1.0, sigma_M=1.0, divergence=div)


def _affine(rho0, A=2.0, b=0.0):
    d = rho0.dim
    A = _as_axis_vector(A, d, "A")
    b = _as_axis_vector(b, d, "b")
    if np.any(A <= 0):
        raise NotPositiveDefinite(f"A must be positive definite, got diagonal {A}")
    inv = 1.0 / A
    dom = rho0.domain
    lo1 = (np.asarray(dom.lo) - b) * inv
    hi1 = (np.asarray(dom.hi) - b) * inv
    det_A = float(np.prod(A))
    pdf0 = rho0.pdf

    def rho1_fn(y):
        return pdf0(y * A + b) * det_A

    rho1 = build_grid_measure(BoxDomain(lo1, hi1, dom.n), rho1_fn, label="affine target")

    def g(y):
        return 0.5 * np.einsum("ij,j,ij->i", y, A, y) + y @ b

    def g_star(x):
        z = x - b
        return 0.5 * np.einsum("ij,j,ij->i", z, inv, z)

    def grad_g(y):
        return y * A + b

    def grad_g_star(x):
        return (x - b) * inv

    def hess(x):
        n = len(x)
        return np.broadcast_to(np.diag(inv), (n, d, d)).copy()

    def div(x, y):
        r = x - b - y * A
        return 0.5 * np.einsum("...k,k,...k->...", r, inv, r)

    return dict(rho1=rho1, g=g, g_star=g_star, grad_g=grad_g,
                grad_g_star=grad_g_star, hess_g_star=hess,
                sigma_m=float(inv.min()), sigma_M=float(inv.max()),
                divergence=div, params=dict(A=A.tolist(), b=b.tolist()))


def _perturbed(rho0, eta=0.2, mode=1, sigma_target=0.5):
    # g*(x) = |x|^2/2 + eta * sum_k s(x_k) with s'' = cos(mode*pi*(x-lo)/L);
    # the map x + eta*s'(x) fixes both faces of the box
    d = rho0.dim
    dom = rho0.domain
    if not 0 < sigma_target < 1:
        raise ValueError("sigma_target must lie in (0, 1)")
    s2_sup = 1.0
    if abs(eta) > sigma_target / s2_sup:
        raise NotPositiveDefinite(
            f"|eta|={abs(eta):g} exceeds sigma_target/||s''||={sigma_target / s2_sup:g}")
    lo = np.asarray(dom.lo)
    L = np.asarray(dom.extent)
    k = float(mode)
    if k != int(k) or k < 1:
        raise ValueError("mode must be a positive integer")
    freq = k * np.pi / L

    def s(x):
        return -np.cos(freq * (x - lo)) / freq ** 2

    def ds(x):
        return np.sin(freq * (x - lo)) / freq

    def d2s(x):
        return np.cos(freq * (x - lo))

    def g_star(x):
        return 0.5 * np.einsum("ij,ij->i", x, x) + eta * s(x).sum(axis=1)

    def grad_g_star(x):
        return x + eta * ds(x)

    def hess(x):
        n = len(x)
        out = np.zeros((n, d, d))
        idx = np.arange(d)
        out[:, idx, idx] = 1.0 + eta * d2s(x)
        return out

    reach = abs(eta) / freq

    def grad_g(y):
        # per-axis inverse of a strictly increasing map: bisection, then Newton
        y = np.asarray(y, dtype=np.float64)
        left = y - reach - 1e-12
        right = y + reach + 1e-12
        for _ in range(60):
            mid = 0.5 * (left + right)
            low = grad_g_star(mid) < y
            left = np.where(low, mid, left)
            right = np.where(low, right, mid)
        x = 0.5 * (left + right)
        for _ in range(2):
            x = x - (grad_g_star(x) - y) / (1.0 + eta * d2s(x))
        return x

    def g(y):
        x = grad_g(y)
        return np.einsum("ij,ij->i", x, y) - g_star(x)

    pdf0 = rho0.pdf

    def rho1_fn(y):
        x = grad_g(y)
        return pdf0(x) / np.prod(1.0 + eta * d2s(x), axis=1)

    rho1 = build_grid_measure(dom, rho1_fn, label="perturbed target")
    return dict(rho1=rho1, g=g, g_star=g_star, grad_g=grad_g,
                grad_g_star=grad_g_star, hess_g_star=hess,
                sigma_m=1.0 - abs(eta) * s2_sup, sigma_M=1.0 + abs(eta) * s2_sup,
                params=dict(eta=float(eta), mode=int(k), sigma_target=float(sigma_target)))


def make_family(kind, d=1, n=1000, lo=0.0, hi=1.0, density=None, alpha=_SMOOTH_ALPHA,
                **params):
    """Build a closed-form transport pair.

    Parameters
    ----------
    kind : {"identity", "affine", "perturbed"}
    d : int
        Dimension.
    n : int or sequence of int
        Cells per axis for both grids.
    lo, hi : float or sequence of float
        Source box.
    density : callable, optional
        Un-normalised source density; uniform by default.
    **params
        ``affine``: ``A`` (positive diagonal, scalar or per-axis), ``b`` shift.
        ``perturbed``: ``eta``, ``mode``, ``sigma_target``.

    Raises
    ------
    NotPositiveDefinite
        If the Hessian bounds fail at some source node.
    """
    lo_v = np.broadcast_to(np.asarray(lo, dtype=float), (d,))
    hi_v = np.broadcast_to(np.asarray(hi, dtype=float), (d,))
    rho0 = build_grid_measure(BoxDomain(lo_v, hi_v, n), density, label="source")
    if kind == "identity":
        parts = _identity(rho0)
    elif kind == "affine":
        parts = _affine(rho0, **params)
    elif kind == "perturbed":
        parts = _perturbed(rho0, **params)
    else:
        raise ValueError(f"unknown family {kind!r}; choose from {FAMILIES}")
    extra = parts.pop("params", {})
    pair = AnalyticPair(rho0=rho0, alpha=float(alpha), label=kind,
                        params=dict(extra, d=d, n=list(rho0.domain.n)), **parts)
    eig = np.linalg.eigvalsh(pair.hess_g_star(rho0.points))
    if eig.min() < pair.sigma_m - 1e-12 or eig.max() > pair.sigma_M + 1e-12 \
            or pair.sigma_m <= 0:
        raise NotPositiveDefinite(
            f"Hessian eigenvalues [{eig.min():g}, {eig.max():g}] outside "
            f"[{pair.sigma_m:g}, {pair.sigma_M:g}]")
    return pair


def check_pair(pair, n_samples=200, seed=0):
    """Residuals of the defining identities of a pair.

    Returns a dict with the convex-duality residual, the Monge-Ampere residual,
    the map round-trip error and the Hessian eigenvalue range, each a max over
    source nodes (or sampled target points for the round trip).
    """
    x = pair.rho0.points
    tx = pair.grad_g_star(x)
    duality = pair.g_star(x) + pair.g(tx) - np.einsum("ij,ij->i", x, tx)
    det = np.linalg.det(pair.hess_g_star(x))
    ma = det - pair.rho0.density / pair.rho1.pdf(tx)
    rng = np.random.default_rng(seed)
    dom1 = pair.rho1.domain
    ys = rng.uniform(dom1.lo, dom1.hi, size=(n_samples, pair.dim))
    roundtrip = pair.grad_g_star(pair.grad_g(ys)) - ys
    eig = np.linalg.eigvalsh(pair.hess_g_star(x))
    return dict(duality=float(np.abs(duality).max()),
                monge_ampere=float(np.abs(ma).max()),
                roundtrip=float(np.abs(roundtrip).max()),
                eig_min=float(eig.min()), eig_max=float(eig.max()))
