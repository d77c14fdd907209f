import math
import sys

import numpy as np
import pytest

from casimir_sta import (
    CavityProtocol,
    complete_by_extension,
    complete_by_pulse,
    complete_by_time_reversal,
    make_cosine_pulse,
    make_polynomial_pulse,
    solve,
)

FIG6_OMEGA = 2 * math.pi / 1.5


@pytest.fixture(scope="session")
def poly_pulse():
    return make_polynomial_pulse(1.0, 0.3, 1.0)


@pytest.fixture(scope="session")
def bare(poly_pulse):
    return CavityProtocol.right_only(poly_pulse)


@pytest.fixture(scope="session")
def bare_pair(bare):
    return solve(bare)


@pytest.fixture(scope="session")
def cosine_pulse():
    return make_cosine_pulse(1.0, 0.5, FIG6_OMEGA)


@pytest.fixture(scope="session")
def short_poly():
    # short pulse: tau = 0.5 <= R+ = 0.9
    return make_polynomial_pulse(1.0, 0.1, 0.5)


@pytest.fixture(scope="session")
def extension_plan(bare):
    return complete_by_extension(bare, final_length=0.7)


@pytest.fixture(scope="session")
def extension_pair(extension_plan):
    return solve(extension_plan.completed)


@pytest.fixture(scope="session")
def pulse_right(cosine_pulse):
    return complete_by_pulse(cosine_pulse, "right", 1)


@pytest.fixture(scope="session")
def pulse_left(cosine_pulse):
    return complete_by_pulse(cosine_pulse, "left", 1)


@pytest.fixture(scope="session")
def reversal_plan(bare):
    return complete_by_time_reversal(bare, 0)


def dense(a, b, n=2001):
    return np.linspace(a, b, n)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
