import numpy as np
import pytest

from irsdl.config import SystemConfig, load_profile


@pytest.fixture(scope="session")
def desk():
    return load_profile("desk")


@pytest.fixture(scope="session")
def desk_cfg(desk):
    return desk.system


@pytest.fixture(scope="session")
def full_cfg():
    return load_profile("paper").system


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    return SystemConfig(M=2, N_H=2, N_V=2, T=5)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
