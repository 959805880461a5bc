import numpy as np
import pytest

from bayesmask import _kernels
from bayesmask.model import BMState, Dataset


def pytest_sessionstart(session):
    _kernels.warmup()


def random_state(rng, n, k, pi_range=(0.05, 0.95), beta_scale=1.0):
    """A dataset and a random interior state on it."""
    x = rng.normal(size=(n, k))
    beta_true = rng.normal(size=k)
    y = x @ beta_true + 0.3 * rng.normal(size=n)
    data = Dataset(x=x, y=y)
    state = BMState(
        beta=beta_scale * rng.normal(size=k),
        lam=float(rng.uniform(0.5, 3.0)),
        pi=rng.uniform(*pi_range, size=k),
        mu=rng.uniform(0.02, 0.98, size=(n, k)),
        active=tuple(range(k)),
    )
    return data, state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
