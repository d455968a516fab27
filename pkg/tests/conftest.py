import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_admissible_covariance(rng, d=2, floor=0.5):
    """Symmetric positive definite matrix whose symplectic spectrum is >= floor."""
    from ehrenfest.core import make_symplectic_form

    n = d // 2
    J = make_symplectic_form(n)
    # random symplectic matrix as exp(J K) with K symmetric
    from scipy.linalg import expm

    K = rng.normal(scale=0.3, size=(d, d))
    S = expm(J @ (K + K.T) / 2)
    nu = floor + rng.uniform(0.0, 1.0, n)
    D = np.diag(np.concatenate([nu, nu]))
    return S @ D @ S.T


@pytest.fixture
def random_state(rng):
    def make(d=2):
        z = rng.uniform(-1.0, 1.0, d)
        return z, random_admissible_covariance(rng, d)

    return make


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
