import numpy as np
import pytest

from levy_fbsde import SolverConfig, RegressionSpec, TimeGrid, black_scholes, picard_solve, simulate_drivers


def solve(model, N=50, paths=20_000, seed=1, T=1.0, config=None):
    scenario = simulate_drivers(model.drivers, TimeGrid(T, N), paths, seed, bases=model.bases)
    return picard_solve(model, scenario, config or SolverConfig())


@pytest.fixture(scope="session")
def bs_solution():
    model = black_scholes()
    return model, solve(model, N=50, paths=50_000, seed=3)
