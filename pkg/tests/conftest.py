import numpy as np
import pytest

from relaxns.initial import make_ns_initial
from relaxns.ns import reference_run
from relaxns.spectral import TorusGrid

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid(32)


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(64)


@pytest.fixture(scope="session")
def tg_ref32(grid32):
    """Taylor-Green reference on n=32 up to t=0.05, every step stored."""
    return reference_run(make_ns_initial("taylor-green", grid32), 0.05, dt=2.5e-4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
