"""Probability densities sampled on cell-centred box grids.

A :class:`GridMeasure` stores a density normalised so that the midpoint
quadrature weights ``w_i = density_i * h^d`` sum to one.  Nodes are ordered
with the last axis varying fastest (``numpy.meshgrid(..., indexing="ij")``).
"""

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyGrid,
    NonFiniteValue,
    NonPositiveDensity,
    UnsupportedDimension,
)

SUPPORTED_DIMS = (1, 2, 3)


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[lo, hi]`` with ``n[k]`` cells along axis ``k``.

    Parameters
    ----------
    lo, hi : sequence of float
        Corners; ``lo < hi`` componentwise.
    n : int or sequence of int
        Cells per axis.  A scalar is repeated over every axis.
    """

    lo: tuple
    hi: tuple
    n: tuple

    def __init__(self, lo, hi, n):
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        if len(lo) != len(hi):
            raise DimensionMismatch("lo and hi must have the same length")
        n_arr = np.atleast_1d(n)
        if n_arr.size == 1 and len(lo) > 1:
            n_arr = np.repeat(n_arr, len(lo))
        if n_arr.size != len(lo):
            raise DimensionMismatch("n must give one count per axis")
        if len(lo) not in SUPPORTED_DIMS:
            raise UnsupportedDimension(f"dimension {len(lo)} not in {SUPPORTED_DIMS}")
        if np.any(n_arr <= 0):
            raise EmptyGrid(f"every axis needs at least one cell, got n={tuple(n_arr)}")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ValueError(f"need lo < hi componentwise, got lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", tuple(int(v) for v in n_arr))
        if not (math.isfinite(self.cell_volume) and self.cell_volume > 0):
            raise ValueError("cell volume must be positive and finite")

    @property
    def dim(self):
        return len(self.lo)

    @property
    def extent(self):
        return np.subtract(self.hi, self.lo)

    @property
    def spacing(self):
        return self.extent / np.asarray(self.n)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def size(self):
        return int(np.prod(self.n))

    @property
    def diameter(self):
        return float(np.linalg.norm(self.extent))

    def axes(self):
        """Cell-centre coordinates along each axis."""
        return [lo + (np.arange(n) + 0.5) * (hi - lo) / n
                for lo, hi, n in zip(self.lo, self.hi, self.n)]

    def nodes(self):
        """All cell centres as an ``(N, d)`` array."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, pts, slack=1e-12):
        pts = np.atleast_2d(pts)
        lo = np.asarray(self.lo) - slack
        hi = np.asarray(self.hi) + slack
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def distance_to_boundary(self, pts):
        pts = np.atleast_2d(pts)
        return np.min(np.minimum(pts - np.asarray(self.lo),
                                 np.asarray(self.hi) - pts), axis=-1)

    def with_n(self, n):
        return BoxDomain(self.lo, self.hi, n)


@dataclass(frozen=True)
class GridMeasure:
    """Normalised density on the nodes of a :class:`BoxDomain`.

    Attributes
    ----------
    domain : BoxDomain
    density : ndarray
        Normalised density at the nodes.
    weights : ndarray
        Quadrature weights, ``density * cell_volume``.
    bounds : tuple of float
        ``(lam, Lam)``, the smallest and largest node density.
    pdf : callable or None
        Normalised density at arbitrary points, when the source function is
        known.
    """

    domain: BoxDomain
    density: np.ndarray
    weights: np.ndarray
    bounds: tuple
    pdf: object = field(default=None, compare=False, repr=False)
    label: str = ""

    @property
    def dim(self):
        return self.domain.dim

    @cached_property
    def points(self):
        pts = self.domain.nodes()
        pts.setflags(write=False)
        return pts

    def __len__(self):
        return self.domain.size


def _sample(density_fn, pts):
    vals = np.asarray(density_fn(pts), dtype=np.float64)
    return _as_column(vals, pts, density_fn)


def _as_column(vals, pts, fn):
    if vals.ndim == 0:
        return np.full(len(pts), float(vals))
    if vals.size == len(pts):
        return vals.reshape(-1)
    return np.array([np.asarray(fn(p), dtype=np.float64).item() for p in pts])


def build_grid_measure(domain, density_fn=None, label=""):
    """Sample ``density_fn`` at the cell centres and normalise.

    Parameters
    ----------
    domain : BoxDomain
    density_fn : callable, optional
        Maps an ``(N, d)`` array to ``N`` nonnegative values.  Functions of a
        single point also work (slower).  Defaults to the uniform density.
    label : str

    Returns
    -------
    GridMeasure

    Raises
    ------
    NonPositiveDensity
        If any sample is ``<= 0``.
    """
    if density_fn is None:
        density_fn = _uniform
    pts = domain.nodes()
    raw = _sample(density_fn, pts)
    if not np.all(np.isfinite(raw)):
        raise NonFiniteValue("density_fn returned non-finite values")
    if np.any(raw <= 0):
        bad = int(np.argmin(raw))
        raise NonPositiveDensity(
            f"density must be strictly positive on every node; "
            f"node {bad} at {pts[bad]} has value {raw[bad]:g}")
    scale = math.fsum(raw) * domain.cell_volume
    density = raw / scale
    weights = density * domain.cell_volume

    def pdf(x, _f=density_fn, _s=scale):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return _sample(_f, x) / _s

    return GridMeasure(domain=domain, density=_frozen(density),
                       weights=_frozen(weights),
                       bounds=(float(density.min()), float(density.max())),
                       pdf=pdf, label=label)


def _uniform(pts):
    return np.ones(len(pts))


def integrate(measure, f):
    """Midpoint quadrature ``sum_i f(x_i) w_i`` with compensated summation."""
    pts = measure.points
    vals = _as_column(np.asarray(f(pts), dtype=np.float64), pts, f)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteValue("integrand is not finite at every node")
    return math.fsum(vals * measure.weights)


def write_measure_csv(measure, path, values=None, header_lines=()):
    """Write nodes, density and weight (plus optional extra columns).

    ``values`` maps extra column names to per-node arrays.
    """
    pts = measure.points
    d = pts.shape[1]
    values = dict(values or {})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow([f"x_{k + 1}" for k in range(d)] + ["density", "weight"]
                        + list(values))
        extra = [np.asarray(v) for v in values.values()]
        for i in range(len(pts)):
            row = [repr(float(c)) for c in pts[i]]
            row += [repr(float(measure.density[i])), repr(float(measure.weights[i]))]
            row += [repr(float(v[i])) for v in extra]
            writer.writerow(row)
