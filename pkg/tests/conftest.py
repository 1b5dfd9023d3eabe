import random

import pytest

from doublefield.symcore import CoordSystem


@pytest.fixture
def cs2():
    return CoordSystem(2)


@pytest.fixture
def cs3():
    return CoordSystem(3)


@pytest.fixture
def rng():
    return random.Random(20240611)


def vec(cs, *comps):
    from doublefield.tensor import vector

    return vector(cs, [cs.parse(str(c)) for c in comps])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT, key=lambda s: (int("".join(c for c in s.split()[0] if c.isdigit())), s)):
            terminalreporter.write_line(line)
