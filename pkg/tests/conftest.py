import sys
import numpy as np
import pytest

from bdsym.rates import PlaneModel, build_preset


@pytest.fixture
def absorbing_20():
    return build_preset("constant-absorbing", N=20, lam=1.0, mu=0.5)


@pytest.fixture
def ehrenfest_20():
    return build_preset("ehrenfest", N=20, alpha=1.0)


@pytest.fixture
def plane_xi2():
    return PlaneModel(2.0, 1.0, 1.0, 2.0)


@pytest.fixture
def fig_times():
    return np.linspace(0.01, 10.0, 1000)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
