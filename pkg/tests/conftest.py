import numpy as np
import pytest

from qotlimit import kernels
from qotlimit.analytic import make_family
from qotlimit.asymptotics import sweep

EPS_1D = (1e-2, 10 ** -2.5, 1e-3, 10 ** -3.5, 1e-4)
EPS_2D = (1e-2, 3e-3, 1e-3)

BACKENDS = kernels.available_backends()


def random_instance(rng, n0, n1, d=1, scale=1.0):
    """Random points in ``[0, scale]^d`` with positive normalised weights."""
    x = rng.uniform(0, scale, size=(n0, d))
    y = rng.uniform(0, scale, size=(n1, d))
    p = rng.uniform(0.5, 1.5, size=n0)
    q = rng.uniform(0.5, 1.5, size=n1)
    return (x, p / p.sum()), (y, q / q.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def identity_1d():
    return make_family("identity", d=1, n=4000)


@pytest.fixture(scope="session")
def identity_1d_small():
    return make_family("identity", d=1, n=2000)


@pytest.fixture(scope="session")
def affine_1d():
    return make_family("affine", d=1, n=4000, A=2.0)


@pytest.fixture(scope="session")
def identity_sweep_1d(identity_1d):
    return sweep(identity_1d, EPS_1D, tol=1e-8)


@pytest.fixture(scope="session")
def affine_sweep_1d(affine_1d):
    return sweep(affine_1d, EPS_1D, tol=1e-8)


@pytest.fixture(scope="session")
def identity_sweep_2d():
    pair = make_family("identity", d=2, n=120)
    return sweep(pair, EPS_2D, tol=1e-8)


def _glass(pair, delta, eps):
    import warnings

    from qotlimit.barenblatt import build_frame, glass_coupling

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return glass_coupling(pair, build_frame(pair.rho0, delta), eps, support_check="warn")


@pytest.fixture(scope="session")
def glass_d01_e3(identity_1d):
    return _glass(identity_1d, 0.1, 1e-3)


@pytest.fixture(scope="session")
def glass_d005_e4(identity_1d):
    return _glass(identity_1d, 0.05, 1e-4)


@pytest.fixture(scope="session")
def glass_d01_e4(identity_1d):
    return _glass(identity_1d, 0.1, 1e-4)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
