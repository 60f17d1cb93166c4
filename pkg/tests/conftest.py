from fractions import Fraction

import numpy as np
import pytest

from krental.rounding import OcrInput

ACCEPTANCE_LINES: list = []


@pytest.fixture
def worked_example():
    """Two units, duration 5, four players."""
    F = Fraction
    return OcrInput(2, 5, (1, 2, 3, 6), (F(2, 5), F(1, 2), F(3, 5), F(3, 5)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
