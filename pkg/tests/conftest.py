import itertools

import numpy as np
import pytest

from falcon_lfd.config import DEFAULT_END, DEFAULT_START, ScenarioConfig
from falcon_lfd.dynamics import DynamicParams
from falcon_lfd.kinematics import KinematicGeometry, workspace_contains
from falcon_lfd.scenario import run

SAMPLE_CENTER = np.array([0.0, 0.0, 0.12])
SAMPLE_HALF = np.array([0.03, 0.05, 0.02])


@pytest.fixture(scope="session")
def geom():
    return KinematicGeometry()


@pytest.fixture(scope="session")
def params():
    return DynamicParams()


def workspace_grid():
    axes = [np.linspace(-0.025, 0.025, 5), np.linspace(-0.05, 0.05, 5), np.linspace(0.10, 0.14, 5)]
    pts = [np.array(p) for p in itertools.product(*axes)]
    return pts + [np.array(DEFAULT_START), np.array(DEFAULT_END)]


def random_points(geom, n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        p = SAMPLE_CENTER + rng.uniform(-SAMPLE_HALF, SAMPLE_HALF)
        if workspace_contains(geom, p):
            out.append(p)
    return out


def random_states(geom, n, seed=0, speed=0.2):
    """(x, xdot, xddot) triples inside the workspace."""
    rng = np.random.default_rng(seed + 1)
    return [(x, rng.normal(scale=speed, size=3), rng.normal(scale=2.0, size=3)) for x in random_points(geom, n, seed)]


@pytest.fixture(scope="session")
def default_run():
    """Default scenario (default gains and payload steps), shared by several tests."""
    return run(ScenarioConfig(), write=False)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
