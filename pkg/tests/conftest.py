"""Shared fixtures: canonical test maps and their solved curves.

T1 (case 1):  c=1, f2 = 1.5 x^2          (k=2, a_2=1.5)
T2 (case 2):  c=1, f2 = x^3 + x y        (k=3, l=2, a_3=1, b_2=1)
T3 (case 3):  c=1, f2 = -x y + x^4       (l=2, b_2=-1, k=4, a_4=1)

EXACT: c=1, f2 = x^3 - 0.125 x^4 + x y.  Built so the curve (t, -0.5 t^2)
with inner dynamics t - 0.5 t^2 is exactly invariant:
    F(t, -.5t^2) = (t-.5t^2, -.5t^2 + t^3 - .125t^4 - .5t^3)
                 = (R, -.5 R^2)  with  R = t - .5 t^2.
"""

from __future__ import annotations

import numpy as np
import pytest

from paramfold.approx import Branch, approximate
from paramfold.jets import Jet2
from paramfold.model import PlanarMapSpec, reduce
from paramfold.refine import RefineConfig, picard_solve


def make_spec(name: str, monomials, c: float = 1.0, degree: int = 6) -> PlanarMapSpec:
    return PlanarMapSpec(
        name, c, degree, Jet2.zero(degree), Jet2.from_monomials(monomials, degree)
    )


@pytest.fixture(scope="session")
def t1_spec():
    return make_spec("T1", [(2, 0, 1.5)])


@pytest.fixture(scope="session")
def t2_spec():
    return make_spec("T2", [(3, 0, 1.0), (1, 1, 1.0)])


@pytest.fixture(scope="session")
def t3_spec():
    return make_spec("T3", [(1, 1, -1.0), (4, 0, 1.0)])


@pytest.fixture(scope="session")
def exact_spec():
    return make_spec("EXACT", [(3, 0, 1.0), (4, 0, -0.125), (1, 1, 1.0)])


@pytest.fixture(scope="session")
def t1_rm(t1_spec):
    return reduce(t1_spec)


@pytest.fixture(scope="session")
def t2_rm(t2_spec):
    return reduce(t2_spec)


@pytest.fixture(scope="session")
def t3_rm(t3_spec):
    return reduce(t3_spec)


@pytest.fixture(scope="session")
def exact_rm(exact_spec):
    return reduce(exact_spec)


@pytest.fixture(scope="session")
def t1_pair10(t1_rm):
    return approximate(t1_rm, Branch.STABLE, 10)


@pytest.fixture(scope="session")
def t2_pair8(t2_rm):
    return approximate(t2_rm, Branch.STABLE, 8)


@pytest.fixture(scope="session")
def t3_pair8(t3_rm):
    return approximate(t3_rm, Branch.STABLE, 8)


@pytest.fixture(scope="session")
def t1_state10(t1_rm, t1_pair10):
    par, _ = t1_pair10
    return picard_solve(t1_rm, par, RefineConfig(rho=0.05, grid_m=32))


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


# One line per acceptance criterion, echoed after the run (the terminal
# summary is not captured, unlike test stdout).
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
