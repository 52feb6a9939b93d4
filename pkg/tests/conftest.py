import json
from pathlib import Path

import numpy as np
import pytest

from soctunnel.grid import PROPAGATION_POINTS, GridSpec, TrapParams
from soctunnel.stationary import four_mode_coefficients, solve_stationary

ORACLE = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())


@pytest.fixture(scope="session")
def oracle():
    return ORACLE


@pytest.fixture(scope="session")
def sset08():
    return solve_stationary(TrapParams(gamma=0.8))


@pytest.fixture(scope="session")
def sset15():
    return solve_stationary(TrapParams(gamma=1.5))


@pytest.fixture(scope="session")
def coeffs08(sset08):
    return four_mode_coefficients(sset08)


@pytest.fixture(scope="session")
def coeffs15(sset15):
    return four_mode_coefficients(sset15)


@pytest.fixture(scope="session")
def prop08():
    """Stationary set on the coarser propagation grid."""
    return solve_stationary(TrapParams(gamma=0.8), GridSpec(n_points=PROPAGATION_POINTS))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for n in sorted(REPORT):
            terminalreporter.write_line(REPORT[n])
