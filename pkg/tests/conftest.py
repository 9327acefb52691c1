import numpy as np
import pytest

from densefactor.channels import AdditiveGaussian, PriorKind, SpreadingKind
from densefactor.hypergraph import sample_regular
from densefactor.instance import generate_instance

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_ising_instance():
    g = sample_regular(120, 2, 12, seed=3)
    return generate_instance(g, 10, 2.0, PriorKind.ISING, AdditiveGaussian(1.0), SpreadingKind.RADEMACHER, seed=3)


@pytest.fixture(scope="session")
def small_gauss3_instance():
    g = sample_regular(60, 3, 10, seed=5)
    return generate_instance(g, 8, 2.0, PriorKind.GAUSSIAN, AdditiveGaussian(1.0), SpreadingKind.DETERMINISTIC, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
