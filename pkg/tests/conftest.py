import time

import numpy as np
import pytest

from lattice_entire.config import ExperimentConfig
from lattice_entire.entire import run_entire
from lattice_entire.experiment import build_fronts, run_settings, run_supersub
from lattice_entire.lattice import Direction, PeriodicNonlinearity, default_kernel

# (criterion number, title, passed, detail) appended by the acceptance tests
ACCEPTANCE = []
# wall-clock seconds spent building the expensive session fixtures
TIMINGS = {}


def record(number, title, passed, detail=""):
    ACCEPTANCE.append((number, title, bool(passed), detail))
    return bool(passed)


def timed(name, fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    TIMINGS[name] = time.perf_counter() - start
    return out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE, key=lambda r: (r[0], r[1])):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}  {detail}")


@pytest.fixture(scope="session")
def kernel():
    return default_kernel()


@pytest.fixture(scope="session")
def east():
    return Direction(1, 0)


@pytest.fixture(scope="session")
def cubic_small_a():
    return PeriodicNonlinearity(0.02, 4.0)


@pytest.fixture(scope="session")
def periodic_cubic():
    return PeriodicNonlinearity(0.3, np.array([[0.8, 1.2], [1.2, 0.8]]))


@pytest.fixture(scope="session")
def cache_root(tmp_path_factory):
    return tmp_path_factory.mktemp("experiments")


@pytest.fixture(scope="session")
def config12(cache_root):
    return ExperimentConfig().with_overrides(output={"dir": str(cache_root / "t12"),
                                                     "cache_dir": str(cache_root / "fronts")})


@pytest.fixture(scope="session")
def config13(cache_root):
    return ExperimentConfig(scenario="theorem13").with_overrides(
        output={"dir": str(cache_root / "t13"), "cache_dir": str(cache_root / "fronts")})


@pytest.fixture(scope="session")
def fronts12(config12):
    return timed("fronts12", build_fronts, config12)


@pytest.fixture(scope="session")
def fronts13(config13):
    return timed("fronts13", build_fronts, config13)


@pytest.fixture(scope="session")
def supersub12(config12, fronts12):
    return timed("supersub12", run_supersub, config12, fronts12)


@pytest.fixture(scope="session")
def supersub13(config13, fronts13):
    return timed("supersub13", run_supersub, config13, fronts13)


@pytest.fixture(scope="session")
def entire12(config12, supersub12):
    return timed("entire12", run_entire, supersub12.config, run_settings(config12))


@pytest.fixture(scope="session")
def entire13(config13, supersub13):
    return timed("entire13", run_entire, supersub13.config, run_settings(config13))
