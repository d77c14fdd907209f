import math

import numpy as np
import pytest

from casimir_sta.quadrature import QuadratureError, integrate, integrate_many, split_at


def test_polynomial_exact():
    val, err = integrate(lambda x: x**5 - 2 * x, 0.0, 2.0)
    assert val == pytest.approx(64 / 6 - 4, abs=1e-13)
    assert err < 1e-12


def test_kink_with_breakpoint():
    val, _ = integrate(lambda x: np.abs(x - 0.3), 0.0, 1.0, breakpoints=[0.3])
    assert val == pytest.approx(0.5 * 0.3**2 + 0.5 * 0.7**2, abs=1e-14)


def test_kink_without_breakpoint_still_converges():
    val, _ = integrate(lambda x: np.abs(x - 1 / math.pi), 0.0, 1.0, atol=1e-10)
    a = 1 / math.pi
    assert val == pytest.approx(0.5 * a**2 + 0.5 * (1 - a) ** 2, abs=1e-9)


def test_reversed_limits():
    val, _ = integrate(np.sin, math.pi, 0.0)
    assert val == pytest.approx(-2.0, abs=1e-13)


def test_many_owners():
    a = np.array([0.0, 0.0, 1.0])
    b = np.array([1.0, 2.0, 3.0])
    v, _ = integrate_many(np.exp, a, b, np.array([0, 1, 1]), 2)
    assert v[0] == pytest.approx(math.e - 1, abs=1e-12)
    assert v[1] == pytest.approx(math.exp(2) - 1 + math.exp(3) - math.e, abs=1e-11)


def test_split_at():
    assert np.allclose(split_at(0, 1, [-1, 0.5, 0.5, 2]), [0, 0.5, 1])


def test_non_finite_reports_interval():
    with pytest.raises(QuadratureError) as exc, np.errstate(divide="ignore", invalid="ignore"):
        integrate(lambda x: 1 / (x - 0.5), 0.0, 1.0)
    assert exc.value.interval is not None
