import functools

import numpy as np
import pytest

from sdot2d.model import CostFunction, Problem, Square, TargetMeasure, Uniform
from sdot2d.presets import get_preset
from sdot2d.solve import solve


def symmetric_pair(masses=(0.5, 0.5), cost=None) -> Problem:
    pts = [(0.25, 0.5), (0.75, 0.5)]
    return Problem(Square(0.0, 1.0), cost or CostFunction.pnorm(2), Uniform(1.0), TargetMeasure(pts, masses), "pair")


@functools.lru_cache(maxsize=None)
def solved(name: str):
    """Solve a preset with its documented configuration once per session."""
    pre = get_preset(name)
    w, rep = solve(pre.problem, init=pre.init, grid_h=pre.grid_h)
    return pre, w, rep


@pytest.fixture
def pair():
    return symmetric_pair()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
