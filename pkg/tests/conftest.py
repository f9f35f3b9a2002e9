import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from waschl.array import ArrayGeometry
from waschl.spectral import StftParams

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def params():
    return StftParams()


@pytest.fixture
def geom8():
    return ArrayGeometry.equispaced(8, 0.12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


@pytest.fixture
def criterion(request):
    """``criterion(tag, passed, detail)`` records one acceptance line."""
    lines = request.config.stash[_CRITERIA]

    def record(tag, passed, detail):
        lines.append(f"[{tag:>3}] {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
