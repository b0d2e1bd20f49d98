"""Shared fixtures.

The closed-loop runs are expensive (tens of seconds for the full platoon
horizon), so they happen once per session and every test that needs a
finished log reuses them.
"""

import importlib.resources
import time

import pytest

from delaysafe.engine import run_scenario
from delaysafe.platoon import run_platoon
from delaysafe.scenario import load_scenario


def packaged_scenario(name: str):
    ref = importlib.resources.files("delaysafe") / "scenarios" / (name + ".scn")
    with importlib.resources.as_file(ref) as path:
        return load_scenario(path)


class TimedRun:
    """A finished run plus the wall time it took."""

    def __init__(self, value, wall: float):
        self.value = value
        self.wall = wall


def _timed(fn):
    t0 = time.perf_counter()
    value = fn()
    return TimedRun(value, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def platoon_nominal():
    return _timed(lambda: run_platoon(mode="nominal"))


@pytest.fixture(scope="session")
def platoon_adaptive():
    return _timed(lambda: run_platoon(mode="adaptive"))


@pytest.fixture(scope="session")
def platoon_uncompensated():
    return _timed(lambda: run_platoon(mode="uncompensated"))


@pytest.fixture(scope="session")
def regulation_cfg():
    return packaged_scenario("regulation-demo")


@pytest.fixture(scope="session")
def regulation_nominal(regulation_cfg):
    return run_scenario(regulation_cfg, mode="nominal")


@pytest.fixture(scope="session")
def regulation_adaptive(regulation_cfg):
    return run_scenario(regulation_cfg, mode="adaptive")
