import numpy as np
import pytest

from psublap.geometry import Grid, make_euclidean, make_heisenberg

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def euclid2():
    return make_euclidean(2)


@pytest.fixture
def heis():
    return make_heisenberg()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_box(dim=2, n=33):
    return Grid.box(dim, n)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
