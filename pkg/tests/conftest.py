import numpy as np
import pytest

from ccbe.grid import TruncationConfig, build_grid
from ccbe.integrator import IntegratorConfig, integrate
from ccbe.kernel_model import DaughterSpec, EfficiencySpec, KernelSpec
from ccbe.operators import State, build_tables


def exp_cell_average(grid, c=1.0, mu=1.0):
    """Cell averages of c exp(-v/mu)."""
    return c * mu * (np.exp(-grid.edges[:-1] / mu) - np.exp(-grid.edges[1:] / mu)) / grid.widths


def default_tables(tau, n=10.0, cells=256, theta=0.0, e=0.7, strict=True, kernel=None, alpha=0.25):
    grid = build_grid(n, cells)
    tables = build_tables(
        grid,
        TruncationConfig(n, tau),
        kernel or KernelSpec(alpha=alpha),
        EfficiencySpec(value=e),
        DaughterSpec(theta),
        strict=strict,
    )
    return grid, tables


@pytest.fixture(scope="session")
def default_run():
    """The reference scenario at both truncations: {tau: (grid, tables, trajectory)}."""
    out = {}
    for tau in (0, 1):
        grid, tables = default_tables(tau)
        traj = integrate(State(exp_cell_average(grid)), IntegratorConfig(), tables)
        out[tau] = (grid, tables, traj)
    return out


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
