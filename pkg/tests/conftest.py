import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracrkm.operator import OperatorPencil

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_spd(rng, n, cond=1e3):
    """Dense SPD matrix with eigenvalues log-spread over [1, cond]."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.geomspace(1.0, cond, n)
    A = (Q * lam) @ Q.T
    return 0.5 * (A + A.T)


def random_pencil(rng, n, cond=1e3, mass=True):
    K = random_spd(rng, n, cond)
    M = random_spd(rng, n, 10.0) if mass else None
    return OperatorPencil.from_matrices(K, M)


def diag_pencil(values, mass=None):
    return OperatorPencil.from_matrices(np.diag(np.asarray(values, dtype=float)), mass)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one status line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: dict = {}


def report_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
