import numpy as np
import pytest

from fbmhd.surface_geometry import BoundarySeries, DomainChart, build_surface

ACCEPTANCE_LINES = []


def disk_chart(n_r=32, n_theta=32, collar_delta=0.5):
    return DomainChart(build_surface(BoundarySeries.zeros(2), collar_delta), n_r, n_theta)


def bumpy_chart(n_r=32, n_theta=32, amp=0.1, collar_delta=1.0):
    eta = BoundarySeries.from_modes(4, cos={2: amp, 3: amp / 2})
    return DomainChart(build_surface(eta, collar_delta), n_r, n_theta)


@pytest.fixture
def disk():
    return disk_chart()


@pytest.fixture
def bumpy():
    return bumpy_chart()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
