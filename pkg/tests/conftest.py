import numpy as np
import pytest

from pvd_crossdiff.flux import FluxSchedule
from pvd_crossdiff.solver import Grid, discretize_initial, simulate

K4 = np.array([
    [0.0, 0.1141, 0.0776, 0.0905],
    [0.1141, 0.0, 0.0646, 0.0905],
    [0.0776, 0.0646, 0.0, 0.0905],
    [0.0905, 0.0905, 0.0905, 0.0],
])

BETA_LONG = np.array([0.9, 0.8, 1.7, 0.5])
LEVELS = np.array([[0.9, 1.4, 0.9], [2.0, 1.5, 2.0], [0.2, 1.2, 0.2], [0.7, 0.3, 0.7]])


def gauss(y):
    return np.exp(-((y - 0.5) ** 2) / 0.04)


W_LONG = [gauss, lambda y: y**2, lambda y: 1.0 - gauss(y), lambda y: np.abs(np.sin(np.pi * y))]
W_DEPOSIT = [lambda y: y, lambda y: 2 * y, np.sqrt, lambda y: 0.0 * y]

# acceptance lines collected during the run, printed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def k4():
    return K4.copy()


@pytest.fixture(scope="session")
def longtime_run():
    """The constant-flux run used for the decay observables (T = M = 2000, Q = 100)."""
    grid = Grid(100)
    v0 = discretize_initial(W_LONG, grid)
    phi = FluxSchedule.constant(BETA_LONG)
    return simulate(v0, phi, K4, grid, 2000, 2000.0, 1.0), phi


@pytest.fixture(scope="session")
def deposit_run():
    """Piecewise-constant deposition run (T = M = 200, Q = 100)."""
    grid = Grid(100)
    v0 = discretize_initial(W_DEPOSIT, grid)
    phi = FluxSchedule.piecewise(np.tile([66.0, 132.0], (4, 1)), LEVELS)
    return simulate(v0, phi, K4, grid, 200, 200.0, 1.0), phi


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
