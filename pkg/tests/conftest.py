import math

import numpy as np
import pytest

from aphomog.apfield import scalar_field

SQRT3 = math.sqrt(3.0)


def periodic_field(m=1, d=1):
    return scalar_field(2.0, [(1.0, 1.0)], d=d, m=m, mu=1.0 / 3.0, name="periodic")


def quasi_field(m=1):
    return scalar_field(3.0, [(1.0, 1.0), (math.sqrt(2.0), 1.0)], m=m, mu=0.2, name="quasiperiodic")


def constant_field(d=1, m=1, n=1, value=2.0):
    return scalar_field(value, [], d=d, m=m, n=n, mu=1.0 / value, name="constant")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str):
    """Store and print the one-line verdict of an acceptance criterion."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
