import sys

import pytest

from implcheck import fixtures as fx
from implcheck.model import boolean_inputs


def network_inputs():
    """The 16 boolean inputs of the network, first input fastest."""
    return [{x: d[a] for a, x in zip(fx.A, fx.X)} for d in boolean_inputs(fx.A)]


@pytest.fixture
def circuit_inputs():
    return boolean_inputs(fx.A)


@pytest.fixture
def net_inputs():
    return network_inputs()


@pytest.fixture
def M():
    return fx.circuit_m()


@pytest.fixture
def N():
    return fx.network_n()


@pytest.fixture
def M_star():
    return fx.circuit_m_star()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = mod.pytest_terminal_summary_lines() if mod else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
