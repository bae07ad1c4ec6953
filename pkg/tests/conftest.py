import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
PAULI = [np.eye(2, dtype=complex), SX, SY, SZ]


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def pauli_dense(n, terms):
    """Kronecker-product oracle for a list of (weight, codes)."""
    h = np.zeros((2**n, 2**n), dtype=complex)
    for w, codes in terms:
        h += w * kron_all([PAULI[c] for c in codes])
    return h


def random_state(n, rng, d=2):
    v = rng.normal(size=d**n) + 1j * rng.normal(size=d**n)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
