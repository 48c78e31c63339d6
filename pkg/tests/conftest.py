from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gdconj.scenarios import make_scenario

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def diag():
    return make_scenario("paper_diag", {"c": 1.0})


@pytest.fixture(scope="session")
def const_ln2():
    return make_scenario("const_alpha", {"alpha": np.log(2.0)})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: (len(s.split()[1]), s)):
            terminalreporter.write_line(line)
