import numpy as np
import pytest

from exitbandit.core import ExitProfile, build_loss_vector
from exitbandit.environment import EnvironmentSpec

# 4-exit instance with its optimum at exit 3 (interior), CS-1 costs on layers 1,2,3,12.
INTERIOR_LAYERS = (1, 2, 3, 12)
INTERIOR_GAMMAS = (0.2933, 0.1533, 0.05, 0.04)

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def interior_profile():
    return ExitProfile(INTERIOR_LAYERS, np.array(INTERIOR_LAYERS) / 12)


@pytest.fixture
def interior_losses(interior_profile):
    return build_loss_vector(INTERIOR_GAMMAS, interior_profile)


@pytest.fixture
def interior_spec():
    return EnvironmentSpec(INTERIOR_GAMMAS)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
