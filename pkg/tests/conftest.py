import numpy as np
import pytest

from spdfp.problems import generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def lasso_data():
    """The 50 x 20 LASSO instance used throughout (seed 7)."""
    data, x_true = generate_synthetic("lasso", seed=7, m=50, q=20, sparsity=0.2, noise=0.1)
    return data, x_true


@pytest.fixture(scope="session")
def logistic_data():
    """m=200, q=50 logistic instance (seed 1)."""
    data, x_true = generate_synthetic("logistic", seed=1, m=200, q=50, sparsity=0.2, noise=0.1)
    return data, x_true


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[num])
