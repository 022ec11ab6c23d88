import numpy as np
import pytest

from qenigma.core import RngStream
from qenigma.locking import generate_haar_ensemble, mub_qubit_ensemble

_ACCEPTANCE_LINES = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)
    return line


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def mub1():
    return mub_qubit_ensemble(1)


@pytest.fixture
def haar_factory():
    def make(n_bits, m_bits, seed=0, dim=None):
        return generate_haar_ensemble(n_bits, m_bits, RngStream(seed).split("fixture"), dim=dim)
    return make


def brute_objective(e, phi):
    """Independent evaluation of sum_{j,k} p log2 p straight from the unitaries."""
    total = 0.0
    for k in range(e.n_keys):
        u = np.array(e.unitary(k).matrix)
        for j in range(e.n_messages):
            p = abs(np.vdot(phi, u[:, j])) ** 2
            if p > 0:
                total += p * np.log2(p)
    return total
