"""Porous medium equation reference: Barenblatt profile and energies.

``B(t, x) = t^-alpha [C - beta (m-1)/(2m) |x|^2 / t^{2 beta}]_+^{1/(m-1)}`` solves
``du/dt = Laplace(u^m)`` with ``alpha = d beta`` and ``beta = 1/(d(m-1)+2)``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import gamma as gamma_fn

from .barenblatt import c_eps, constants, local_density


@dataclass(frozen=True)
class BarenblattProfile:
    m: float
    d: int
    C: float

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError("m must exceed 1")
        if not self.C > 0:
            raise ValueError("C must be positive")

    @property
    def beta_exp(self):
        return 1.0 / (self.d * (self.m - 1) + 2)

    @property
    def alpha_exp(self):
        return self.d * self.beta_exp

    @property
    def k(self):
        return self.beta_exp * (self.m - 1) / (2 * self.m)


def _radii_sq(x, d):
    x = np.asarray(x, dtype=np.float64)
    if d == 1 and x.ndim <= 1:
        return x.reshape(-1) ** 2, x.ndim == 0
    x = np.atleast_2d(x)
    return np.einsum("ij,ij->i", x, x), False


def bracket(profile, t, x):
    """``C - k |x|^2 / t^{2 beta}`` (negative outside the support)."""
    r2, _ = _radii_sq(x, profile.d)
    return profile.C - profile.k * r2 / t ** (2 * profile.beta_exp)


def barenblatt(profile, t, x):
    if not t > 0:
        raise ValueError("t must be positive")
    r2, scalar = _radii_sq(x, profile.d)
    br = profile.C - profile.k * r2 / t ** (2 * profile.beta_exp)
    val = t ** (-profile.alpha_exp) * np.maximum(br, 0.0) ** (1.0 / (profile.m - 1))
    if scalar or (profile.d > 1 and np.ndim(x) == 1):
        return float(val[0])
    return val


def support_radius(profile, t):
    return t ** profile.beta_exp * math.sqrt(profile.C / profile.k)


def mass(profile, t):
    """``int B(t, x) dx`` by adaptive radial quadrature."""
    d = profile.d
    area = 2.0 * math.pi ** (d / 2) / gamma_fn(d / 2)
    R = support_radius(profile, t)

    def f(r):
        return area * r ** (d - 1) * barenblatt(profile, t, np.r_[r, np.zeros(d - 1)]
                                                if d > 1 else r)

    val, _ = sp_integrate.quad(f, 0.0, R, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def pme_residual(profile, t, domain, k=None):
    """Max of ``|dB/dt - Laplace(B^m)|`` by central differences.

    Evaluated on the nodes of ``domain`` where the bracket is at least
    ``0.1 C`` at every stencil point; the time step defaults to the smallest
    grid spacing.
    """
    if t < 0.1:
        raise ValueError("t must be at least 0.1")
    h = domain.spacing
    k = float(np.min(h)) if k is None else k
    x = domain.nodes()
    d = domain.dim
    m = profile.m
    dt = (barenblatt_vec(profile, t + k, x) - barenblatt_vec(profile, t - k, x)) / (2 * k)
    lap = np.zeros(len(x))
    ok = bracket(profile, t, x) >= 0.1 * profile.C
    for ax in range(d):
        e = np.zeros(d)
        e[ax] = h[ax]
        plus = barenblatt_vec(profile, t, x + e)
        minus = barenblatt_vec(profile, t, x - e)
        centre = barenblatt_vec(profile, t, x)
        lap += (plus ** m - 2 * centre ** m + minus ** m) / h[ax] ** 2
        ok &= bracket(profile, t, x + e) >= 0.1 * profile.C
        ok &= bracket(profile, t, x - e) >= 0.1 * profile.C
    for tt in (t - k, t + k):
        ok &= bracket(profile, tt, x) >= 0.1 * profile.C
    if not np.any(ok):
        raise ValueError("no grid node lies inside the positivity set")
    return float(np.max(np.abs(dt - lap)[ok]))


def barenblatt_vec(profile, t, x):
    """Vectorised :func:`barenblatt` for an ``(N, d)`` array."""
    r2 = np.einsum("ij,ij->i", x, x)
    br = profile.C - profile.k * r2 / t ** (2 * profile.beta_exp)
    return t ** (-profile.alpha_exp) * np.maximum(br, 0.0) ** (1.0 / (profile.m - 1))


def free_energy(u, domain, m, centre=None):
    """``int |x - centre|^2 u / 2 + u^m / (m - 1) dx`` by midpoint quadrature."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    x = domain.nodes()
    if centre is not None:
        x = x - np.asarray(centre, dtype=np.float64)
    r2 = np.einsum("ij,ij->i", x, x)
    vals = 0.5 * r2 * u + u ** m / (m - 1)
    return math.fsum(vals) * domain.cell_volume


def internal_energy(u, domain, m):
    """``int u^m / (m - 1) dx``, the part of :func:`free_energy` without the potential."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    return math.fsum(u ** m / (m - 1)) * domain.cell_volume


def corollary_match(pair, xp, t=None, convention="printed"):
    """Barenblatt data reproducing :func:`corollary_profile_v` for the identity map.

    Returns ``(profile, scale)`` with ``m = 2`` such that
    ``v(t, x; xp) = B(t, scale * (x - xp))``; ``scale = sqrt(2 (d + 2))``.
    """
    d = pair.dim
    xp_arr = np.atleast_2d(np.asarray(xp, dtype=np.float64).reshape(1, d))
    rho = float(local_density(pair, xp_arr)[0])
    k = constants(d)
    if convention == "printed":
        C = k.c_d / rho ** (1 / (d + 2))
    elif convention == "matched":
        C = float(c_eps(pair, xp_arr, 1.0)[0])
    else:
        raise ValueError("convention must be 'printed' or 'matched'")
    return BarenblattProfile(m=2.0, d=d, C=C), math.sqrt(2.0 * (d + 2))
