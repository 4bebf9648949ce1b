import pytest

from zklab import groundstate, simulator
from zklab.grids import RadialGrid


@pytest.fixture(scope="session")
def q_fast():
    """Moderate-resolution ground state for structural tests."""
    grid = RadialGrid.from_rmax(0.02, 15.0)
    return groundstate.solve_ground_state(grid=grid, taylor_rows=1)


@pytest.fixture(scope="session")
def q_flagship():
    """Flagship-resolution ground state (dr=0.01, rmax=20)."""
    grid = RadialGrid.from_rmax(0.01, 20.0)
    return groundstate.solve_ground_state(grid=grid, taylor_rows=1)


@pytest.fixture(scope="session")
def modref(q_flagship):
    """Shared modulation reference (builds the P profile once)."""
    return simulator.ModulationReference.build(q_flagship.Q)
