import numpy as np
import pytest

from resilient_liquidation import CoefficientFn, ModelParams, ProblemInstance, solve_riccati
from resilient_liquidation.battery import battery


def figure1(eta: float, gamma: float = 100.0) -> ModelParams:
    return ModelParams(eta, gamma, 1.0, rho=CoefficientFn.constant(1.0), lam=CoefficientFn.constant(0.0))


def constant_model(eta=1.0, gamma=0.0, T=1.0, rho=0.0, lam=0.0) -> ModelParams:
    return ModelParams(eta, gamma, T, rho=CoefficientFn.constant(rho), lam=CoefficientFn.constant(lam))


@pytest.fixture(scope="session")
def battery_solutions():
    """Default-seed battery, solved once per session."""
    return [(m, solve_riccati(m)) for m in battery()]


@pytest.fixture(scope="session")
def vwap_solution():
    return solve_riccati(constant_model())


@pytest.fixture(scope="session")
def ac_solution():
    return solve_riccati(constant_model(lam=4.0))


@pytest.fixture(scope="session")
def fig1_solution():
    return solve_riccati(figure1(0.05))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
