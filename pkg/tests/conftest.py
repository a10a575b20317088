import math

import numpy as np
import pytest

from crem.montecarlo import agree
from crem.profile import builtin_profile


@pytest.fixture(scope="session")
def lin():
    return builtin_profile("lin")


@pytest.fixture(scope="session")
def pw1():
    return builtin_profile("pw1")


@pytest.fixture(scope="session")
def pw2():
    return builtin_profile("pw2")


def within_3se(sample, target):
    """Sample mean of ``sample`` is within 3 standard errors of ``target``."""
    x = np.asarray(sample, dtype=float)
    se = x.std(ddof=1) / math.sqrt(x.size)
    return agree(x.mean(), se, target, 0.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
