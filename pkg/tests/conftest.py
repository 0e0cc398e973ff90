import numpy as np
import pytest

from fraclab.pipeline import build_lab

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def lab_1d():
    """Small reflecting lab with Omega = (-0.5, 0.5) and two-sided control sets."""
    return build_lab(
        n=1, Lbox=2.0, N=33, bc="reflecting", s=0.5,
        omega={"interval": [-0.5, 0.5]},
        O1={"interval": [0.6, 1.8]},
        O2={"interval": [-1.8, -0.6]},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
