import random
import sys

import pytest
from hypothesis import settings

from freeprod.core import FreeProductContext, PeripheralFactor

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return random.Random(20261014)


@pytest.fixture
def f2():
    return FreeProductContext([], 2, ["x", "y"])


@pytest.fixture
def abc():
    return FreeProductContext([PeripheralFactor.cyclic("A", 2), PeripheralFactor.cyclic("B", 3),
                               PeripheralFactor.cyclic("C", 2)])


@pytest.fixture
def mixed():
    return FreeProductContext([PeripheralFactor.cyclic("A", 3), PeripheralFactor.integers("B")],
                              1, ["t"])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s[4:s.index("]")])):
        terminalreporter.write_line(line)
