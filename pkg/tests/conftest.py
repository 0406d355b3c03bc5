"""Shared solved problems (session scoped: the 2D solves take tens of seconds)."""

import time
import warnings

import pytest

from gceigen.eigen import DomainMarginWarning, estimate_contact_radius, solve_eigen
from gceigen.grid import Grid
from gceigen.penalty import SolverParams
from gceigen.problems import builtin

ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    """Remember one acceptance verdict; printed in the terminal summary."""
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


def _solve(name, half_width, h, **params):
    spec = builtin(name)
    grid = Grid.cube(half_width, spec.n, h)
    t = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DomainMarginWarning)
        pair = solve_eigen(spec, grid, SolverParams(**params))
    return spec, grid, pair, time.perf_counter() - t


@pytest.fixture(scope="session")
def quartic():
    """quartic1d on [-3, 3], h = 2e-3, eps_min = 1e-4."""
    return _solve("quartic1d", 3.0, 2e-3, eps_min=1e-4)


@pytest.fixture(scope="session")
def radial2d():
    return _solve("radial2d", 2.5, 0.02)


@pytest.fixture(scope="session")
def separable2d():
    return _solve("separable2d", 2.5, 0.02)


@pytest.fixture(scope="session")
def ellipse2d():
    spec = builtin("ellipse2d")
    hw = round(1.2 * estimate_contact_radius(spec) + 0.05, 1)
    return _solve("ellipse2d", hw, 0.04)


@pytest.fixture(scope="session")
def degenerate():
    return _solve("degenerate_zeroF", 3.0, 2e-3)
