import numpy as np
import pytest
from scipy import stats

from grss.distributions import Family

# Independent reference implementations of the four standard forms.
SCIPY_REFERENCE = {
    Family.NORMAL: stats.norm(),
    Family.LOGISTIC: stats.logistic(),
    Family.LAPLACE: stats.laplace(),
    Family.EXPONENTIAL: stats.expon(),
}

ALL_FAMILIES = list(Family)
SYMMETRIC_FAMILIES = [Family.NORMAL, Family.LOGISTIC, Family.LAPLACE]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# One PASS/FAIL line per acceptance criterion, collected while the suite runs.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
