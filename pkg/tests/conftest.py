import numpy as np
import pytest

from imeasure.measures import AtomicSpace, OperatorMeasure
from imeasure.spaces import NormedSpace, NormTag

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def scalar():
    return NormedSpace(1, NormTag.SUM)


@pytest.fixture
def scalar_pair(scalar):
    """Two atoms carrying 1 and -2."""
    return OperatorMeasure(AtomicSpace.of_size(2), scalar, scalar, np.array([[[1.0]], [[-2.0]]]))


@pytest.fixture
def diag_projections():
    E = NormedSpace(2, NormTag.EUCLIDEAN)
    head = np.array([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    return OperatorMeasure(AtomicSpace.of_size(2), E, E, head)
