import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scsqkd.errors import DomainError
from scsqkd.stats import (
    binary_entropy,
    expected_lower,
    expected_lower_array,
    expected_upper,
    expected_upper_array,
    log_residual,
    real_upper,
    real_upper_array,
    real_upper_bound,
)

# 50-digit mpmath roots of the three tail equations, frozen
ORACLE = [
    ("upper", 1e4, 1e-10, 10704.655062048445),
    ("lower", 1e4, 1e-10, 9326.968601955207),
    ("real", 1e6, 1e-10, 1006895.4264833420),
    ("upper", 250.0, 0.01, 305.06114988758573),
    ("lower", 250.0, 0.01, 201.99994844253221),
    ("real", 1000.0, 0.01, 1104.6913136158930),
]


def _value(kind, x, xi):
    if kind == "upper":
        return expected_upper(x, xi).value
    if kind == "lower":
        return expected_lower(x, xi).value
    return real_upper(x, xi)


@pytest.mark.parametrize("kind,x,xi,expected", ORACLE)
def test_bounds_match_high_precision_roots(backend, kind, x, xi, expected):
    assert _value(kind, x, xi) == pytest.approx(expected, rel=1e-10)


def test_binary_entropy_values():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.1672) == pytest.approx(0.65125930723777124, rel=1e-12)
    assert binary_entropy(0.011) == pytest.approx(0.087351919916316182, rel=1e-12)


def test_binary_entropy_array_and_domain():
    h = binary_entropy(np.array([0.0, 0.25, 0.75, 1.0]))
    assert h.shape == (4,)
    assert h[1] == pytest.approx(h[2])
    for bad in (-0.01, 1.01, float("nan")):
        with pytest.raises(DomainError):
            binary_entropy(bad)


@given(st.floats(0.0, 1.0))
def test_binary_entropy_symmetric_and_bounded(x):
    h = binary_entropy(x)
    assert 0.0 <= h <= 1.0 + 1e-15
    assert h == pytest.approx(binary_entropy(1.0 - x), abs=1e-12)


def test_zero_counts():
    xi = 1e-10
    assert expected_upper(0.0, xi).value == pytest.approx(math.log(2.0 / xi))
    assert expected_lower(0.0, xi).value == 0.0
    assert real_upper(0.0, xi) == pytest.approx(math.log(2.0 / xi))


def test_log_xi_far_below_double_range():
    # budgets like 1e-829 only exist in log space
    log_xi = -829.0 * math.log(10.0)
    b = expected_upper(1e8, log_xi=log_xi)
    assert b.value > 1e8
    assert b.xi == 0.0
    assert log_residual("upper", 1e8, b.delta) == pytest.approx(log_xi - math.log(2.0), rel=1e-9)


def test_domain_errors():
    with pytest.raises(DomainError):
        expected_upper(-1.0, 0.1)
    with pytest.raises(DomainError):
        expected_upper(10.0, 1.5)
    with pytest.raises(DomainError):
        real_upper(10.0)
    with pytest.raises(DomainError):
        expected_lower(float("inf"), 0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-2, 1e12), st.floats(-60.0, -0.01))
def test_bounds_bracket_and_solve_equations(x, log_xi):
    up = expected_upper(x, log_xi=log_xi)
    lo = expected_lower(x, log_xi=log_xi)
    real = real_upper_bound(x, log_xi=log_xi)
    assert lo.value <= x <= up.value
    assert real.value >= x
    target = log_xi - math.log(2.0)
    for kind, b in (("upper", up), ("lower", lo), ("real", real)):
        if math.isinf(b.delta):
            # root beyond the double range: nothing of the count survives
            assert kind == "lower" and b.value == 0.0
            continue
        assert log_residual(kind, x, b.delta) == pytest.approx(target, rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 1e9), st.floats(1.0, 2.0))
def test_bounds_monotone_in_count(x, factor):
    xi = 1e-6
    assert expected_upper(x * factor, xi).value >= expected_upper(x, xi).value
    assert expected_lower(x * factor, xi).value >= expected_lower(x, xi).value
    assert real_upper(x * factor, xi) >= real_upper(x, xi)


def test_smaller_xi_widens_bounds():
    assert expected_upper(1e4, 1e-12).value > expected_upper(1e4, 1e-6).value
    assert expected_lower(1e4, 1e-12).value < expected_lower(1e4, 1e-6).value


def test_array_and_scalar_paths_agree(backend):
    x = np.array([0.0, 1.0, 37.5, 1e3, 2.5e7])
    for arr_fn, scalar in (
        (expected_upper_array, lambda v: expected_upper(v, 1e-8).value),
        (expected_lower_array, lambda v: expected_lower(v, 1e-8).value),
        (real_upper_array, lambda v: real_upper(v, 1e-8)),
    ):
        values, _ = arr_fn(x, math.log(1e-8))
        assert values.shape == x.shape
        np.testing.assert_allclose(values, [scalar(v) for v in x], rtol=1e-12)


def test_backends_agree():
    from scsqkd import _accel

    x = np.geomspace(1e-2, 1e11, 200)
    with _accel.use_backend("numpy"):
        a = expected_upper_array(x, -30.0)[0]
    with _accel.use_backend("numba"):
        b = expected_upper_array(x, -30.0)[0]
    np.testing.assert_allclose(a, b, rtol=1e-11)


def test_tiny_count_lower_bound_collapses_to_zero(backend):
    b = expected_lower(1e-3, log_xi=-1.0)
    assert b.value == 0.0
    assert math.isinf(b.delta)
