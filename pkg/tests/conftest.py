import numpy as np
import pytest

from bousscontrol.config import load_config
from bousscontrol.grid import build_domain


@pytest.fixture(scope="session")
def dom8():
    return build_domain(1.0, 1.0, 8, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_problem(*overrides):
    """Control problem from the default convection config plus overrides."""
    cfg = load_config(None, overrides)
    return cfg, cfg.problem()


@pytest.fixture(scope="session")
def default_setup():
    cfg, prob = make_problem()
    return cfg, prob, cfg.initial_controls(prob.domain, prob.time)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
