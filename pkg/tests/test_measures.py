import math

import numpy as np
import pytest

from qotlimit.errors import (
    EmptyGrid,
    NonFiniteValue,
    NonPositiveDensity,
    UnsupportedDimension,
)
from qotlimit.measures import BoxDomain, build_grid_measure, integrate, write_measure_csv


def test_nodes_are_cell_centres():
    dom = BoxDomain([0.0, -1.0], [1.0, 1.0], [4, 2])
    pts = dom.nodes()
    assert pts.shape == (8, 2)
    np.testing.assert_allclose(dom.axes()[0], [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(dom.axes()[1], [-0.5, 0.5])
    # last axis fastest
    np.testing.assert_allclose(pts[:2], [[0.125, -0.5], [0.125, 0.5]])
    assert dom.cell_volume == pytest.approx(0.25 * 1.0)


def test_uniform_weights():
    m = build_grid_measure(BoxDomain(0, 1, 1000))
    np.testing.assert_allclose(m.weights, 1e-3, rtol=0, atol=1e-15)
    assert m.bounds == pytest.approx((1.0, 1.0))


def test_linear_density_normalisation():
    m = build_grid_measure(BoxDomain(0, 1, 2000), lambda x: 1 + x[:, 0])
    assert abs(math.fsum(m.weights) - 1) <= 1e-12
    lam, Lam = m.bounds
    assert lam == pytest.approx(2 / 3, abs=1e-3)
    assert Lam == pytest.approx(4 / 3, abs=1e-3)
    # one global scale factor
    raw = 1 + m.points[:, 0]
    ratio = m.density / raw
    assert np.ptp(ratio) < 1e-14


def test_zero_node_rejected():
    with pytest.raises(NonPositiveDensity):
        build_grid_measure(BoxDomain(0, 1, 10), lambda x: np.where(x[:, 0] > 0.5, 1.0, 0.0))


def test_empty_grid_and_dimension_errors():
    with pytest.raises(EmptyGrid):
        BoxDomain(0, 1, 0)
    with pytest.raises(UnsupportedDimension):
        BoxDomain([0] * 4, [1] * 4, 3)
    with pytest.raises(ValueError):
        BoxDomain(1, 0, 3)


@pytest.mark.parametrize("f, exact, tol", [
    (lambda x: np.ones(len(x)), 1.0, 1e-12),
    (lambda x: x[:, 0], 0.5, 1e-6),
    (lambda x: x[:, 0] ** 2, 1 / 3, 1e-5),
])
def test_integrate_moments(f, exact, tol):
    m = build_grid_measure(BoxDomain(0, 1, 1000))
    assert abs(integrate(m, f) - exact) <= tol


def test_integrate_rejects_nonfinite():
    m = build_grid_measure(BoxDomain(0, 1, 10))
    with pytest.raises(NonFiniteValue):
        integrate(m, lambda x: np.where(x[:, 0] > 0.5, np.inf, 1.0))


@pytest.mark.parametrize("d", [1, 2])
def test_midpoint_second_order(d):
    def f(x):
        return np.prod(x ** 3 + x, axis=1)

    exact = 0.75 ** d
    errs = []
    for n in (8, 16, 32):
        m = build_grid_measure(BoxDomain([0] * d, [1] * d, n))
        errs.append(abs(integrate(m, f) - exact))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.5 <= r <= 4.5 for r in ratios), ratios


def test_normalisation_idempotent():
    m = build_grid_measure(BoxDomain(0, 1, 500), lambda x: 2 + np.sin(3 * x[:, 0]))
    again = build_grid_measure(m.domain, m.pdf)
    assert np.max(np.abs(again.weights - m.weights)) <= 1e-12


def test_points_are_read_only():
    m = build_grid_measure(BoxDomain(0, 1, 5))
    with pytest.raises(ValueError):
        m.points[0, 0] = 3.0
    with pytest.raises(ValueError):
        m.weights[0] = 3.0


def test_pdf_matches_nodes():
    m = build_grid_measure(BoxDomain(0, 1, 50), lambda x: 1 + x[:, 0])
    np.testing.assert_allclose(m.pdf(m.points), m.density, rtol=1e-14)


def test_csv_export(tmp_path):
    m = build_grid_measure(BoxDomain([0, 0], [1, 1], [2, 3]))
    path = tmp_path / "m.csv"
    write_measure_csv(m, path, values={"extra": np.arange(6)}, header_lines=["hello"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "x_1,x_2,density,weight,extra"
    assert len(lines) == 2 + 6
    row = [float(v) for v in lines[2].split(",")]
    assert row[:2] == [0.25, 1 / 6]
    assert row[3] == pytest.approx(1 / 6)
