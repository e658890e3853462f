import numpy as np
import pytest
from hypothesis import settings

from resilient_evo.domain import Coord, FactoryLayout

settings.register_profile("default", deadline=None, derandomize=True)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def layout_from(points, width=500, height=500, start=(0, 0)):
    """Layout from a nested list ``points[task][station] = (x, y)``."""
    return FactoryLayout(np.array(points, dtype=np.int64), width, height, Coord(*start))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
