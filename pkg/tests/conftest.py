import numpy as np
import pytest

from hinf_observer import SynthesisOptions, example_system
from hinf_observer import synthesis


@pytest.fixture(scope="session")
def example():
    return example_system()


@pytest.fixture(scope="session")
def pareto_095(example):
    """Pareto optimum at the shipped operating point (beta 0.35, lambda 0.95)."""
    return synthesis.pareto_point(example, SynthesisOptions(beta=0.35, lam=0.95))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
