import numpy as np
import pytest

from emhd_cascade.atlas import initial_atlas
from emhd_cascade.params import ModelParams
from emhd_cascade.profiles import make_seed_profile


@pytest.fixture(scope="session")
def seed():
    return make_seed_profile(0.05, 512)


@pytest.fixture(scope="session")
def atlas3(seed):
    """Three bubbles at t = 0 with the default seed."""
    return initial_atlas(ModelParams(n=2), seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
