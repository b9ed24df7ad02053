import numpy as np
import pytest

from wbpdn.model import make_instance


def simple_instance(A, truth, K=(), w=1.0, lam=0.1, eps=0.0, k=None, noise=None):
    """Instance with ``b = A truth + noise`` built from explicit data."""
    A = np.asarray(A, dtype=float)
    truth = np.asarray(truth, dtype=float)
    b = A @ truth if noise is None else A @ truth + noise
    if k is None:
        k = max(1, int(np.count_nonzero(truth)))
    return make_instance(A, b, truth, K, w, lam, eps, k, noise)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
