import numpy as np
import pytest

from hyfc.dynamics import generate_trajectory

# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def lorenz_run():
    """Lorenz attractor run, 300 time units at dt = 0.1."""
    return generate_trajectory("lorenz", 300.0, seed=11)


@pytest.fixture(scope="session")
def lorenz_training(lorenz_run):
    # washout 10 + T 100 + 1
    return lorenz_run.segment(0, 1101)


@pytest.fixture(scope="session")
def ks_run():
    return generate_trajectory("ks", 400.0, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
