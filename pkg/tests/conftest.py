import numpy as np
import pytest

from pfsi.coupling import CoupledProblem, CoupledState, Forcing
from pfsi.geometry import ReferenceGeometry
from pfsi.mesh import ChannelGrid

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def record(number, title, passed, detail):
    ACCEPTANCE[number] = (title, bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d} {title}: {detail}")


@pytest.fixture
def geometry():
    return ReferenceGeometry(2, (1.0, 1.0), 0.4)


@pytest.fixture
def small_forcing():
    return Forcing(fluid=lambda t, X, Z: 1e-2 * np.stack([np.sin(2 * np.pi * Z), 0 * X]),
                   shell=lambda t, y: 1e-2 * np.sin(2 * np.pi * y))


@pytest.fixture
def small_problem(geometry, small_forcing):
    return CoupledProblem(geometry, ChannelGrid(16, 16), small_forcing)


@pytest.fixture
def small_state(small_problem):
    X = small_problem.grid.reference_centers()[..., 0]
    return CoupledState.initial(small_problem, density=1 + 0.2 * np.cos(2 * np.pi * X))
