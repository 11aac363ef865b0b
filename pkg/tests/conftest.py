import numpy as np
import pytest

from gmmddpm.gmm import new_gmm


def random_gmm(gen, K=None, d=None, spread=3.0):
    K = K or int(gen.integers(1, 9))
    d = d or int(gen.integers(1, 7))
    w = gen.dirichlet(np.ones(K) * 2.0)
    w = w / w.sum()
    return new_gmm(w, spread * gen.standard_normal((K, d)))


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


@pytest.fixture
def sym1d():
    return new_gmm([0.5, 0.5], [[-1.0], [1.0]])


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
