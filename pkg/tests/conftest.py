from pathlib import Path

import pytest

from pmpcheck import loads_problem

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"

# Inline systems used across test modules.  Candidates are exact solutions of
# their own dynamics only where a test needs admissibility; the finite-
# difference tests only need the endpoint map, which any candidate provides.

STEER = """
[system]
n = 1
r = 1
dynamics = u1
time = fixed 0 1
[controls]
samples = -1 ; 1
[endpoint]
F0 = x1_1
K = x0_1
[candidate]
breakpoints = 0 1
values = -1
x0 = 0
"""

DI_FIXED = """
[system]
n = 2
r = 1
dynamics = x2 ; u1
time = fixed 0 2
[controls]
samples = -1 ; 1
[endpoint]
F0 = x1_1^2 + x1_2^2
[candidate]
breakpoints = 0 1 2
values = -1 ; 1
x0 = 1 0
"""

PENDULUM = """
[system]
n = 2
r = 1
dynamics = x2 ; -sin(x1) + u1
time = fixed 0 2
[controls]
samples = -1 ; 0 ; 1
[endpoint]
F0 = x1_1^2 + x1_2^2
[candidate]
breakpoints = 0 0.8 2
values = 1 ; -1
x0 = 0.3 0
"""

BILINEAR = """
[system]
n = 2
r = 2
dynamics = u1 * x1 + u2 ; x1 * x2 - u2 + 0.2 * t
time = fixed 0 1.5
[controls]
samples = -1 0 ; 1 0 ; 0 1 ; 1 1
[endpoint]
F0 = x1_1 * x1_2
[candidate]
breakpoints = 0 0.6 1.5
values = 1 0 ; 0 1
x0 = 0.5 -0.2
"""

SYSTEMS = {"steer": STEER, "di": DI_FIXED, "pendulum": PENDULUM,
           "bilinear": BILINEAR}


def make(text: str, steps_per_unit: int = 1000):
    return loads_problem(text, steps_per_unit=steps_per_unit)


@pytest.fixture(scope="session")
def steer():
    return make(STEER)


@pytest.fixture(scope="session")
def di_fixed():
    return make(DI_FIXED)


@pytest.fixture(scope="session")
def pendulum():
    return make(PENDULUM)


@pytest.fixture(scope="session")
def bilinear():
    return make(BILINEAR)
