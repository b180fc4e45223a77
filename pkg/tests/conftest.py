import warnings

import numpy as np
import pytest
from hypothesis import settings

from tiar import dep_grid, dep_random

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(autouse=True)
def _quiet_config_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=r"p=\d+ < m/4")
        yield


@pytest.fixture(scope="session")
def grid21():
    return dep_grid(21)


@pytest.fixture(scope="session")
def grid10():
    return dep_grid(10)


@pytest.fixture
def small_dep():
    return dep_random(8, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {msg}")
