import numpy as np
import pytest

from glm_subsampling.glm_core import Dataset, LogisticFamily, PoissonFamily
from glm_subsampling.simulation.designs import DesignKind, DesignSpec, generate_design, generate_response


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long Monte Carlo checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo check, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def logistic_data():
    """n=2000, d=3 mzNormal logistic data with beta0 = 0.5."""
    rng = np.random.default_rng(2024)
    x = generate_design(DesignSpec(kind=DesignKind.MZ_NORMAL, dim=3), 2000, rng)
    beta0 = np.full(3, 0.5)
    y = generate_response(LogisticFamily(), x, beta0, rng)
    return Dataset.from_arrays(x, y, add_intercept=False), beta0


@pytest.fixture
def poisson_data():
    rng = np.random.default_rng(7)
    x = generate_design(DesignSpec(kind=DesignKind.POISSON_CASE1, dim=3), 2000, rng)
    beta0 = np.full(3, 0.5)
    y = generate_response(PoissonFamily(), x, beta0, rng)
    return Dataset.from_arrays(x, y, add_intercept=False), beta0
