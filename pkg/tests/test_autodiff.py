import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfcalc.autodiff import (Dual, cos, exp, partial_of, seed, sin, sqrt,
                               value_of)

finite = st.floats(-10, 10, allow_nan=False)
nonzero = st.floats(0.5, 10).map(lambda v: v)


def test_seed_and_partials():
    x = seed("x", 2.0)
    y = seed("y", 3.0)
    f = x * x * y + y
    assert value_of(f) == pytest.approx(15.0)
    assert partial_of(f, "x") == pytest.approx(12.0)
    assert partial_of(f, "y") == pytest.approx(5.0)
    assert partial_of(f, "absent") == 0.0


def test_division_and_power():
    x = seed("x", 2.0)
    f = 1.0 / x + x ** 3
    assert value_of(f) == pytest.approx(8.5)
    assert partial_of(f, "x") == pytest.approx(-0.25 + 12.0)


def test_elementary_functions():
    x = seed("x", 0.7)
    assert partial_of(sin(x), "x") == pytest.approx(math.cos(0.7))
    assert partial_of(cos(x), "x") == pytest.approx(-math.sin(0.7))
    assert partial_of(exp(x), "x") == pytest.approx(math.exp(0.7))
    assert partial_of(sqrt(x), "x") == pytest.approx(0.5 / math.sqrt(0.7))


def test_vectorized_seeds():
    vals = np.linspace(0.5, 2.0, 9)
    x = seed("x", vals)
    f = x * sin(x)
    assert np.allclose(value_of(f), vals * np.sin(vals))
    assert np.allclose(partial_of(f, "x"), np.sin(vals) + vals * np.cos(vals))


def test_chain_through_plain_numbers():
    x = seed("x", 1.5)
    f = 2.0 * x + 3.0 - x / 4.0
    assert partial_of(f, "x") == pytest.approx(2.0 - 0.25)
    assert value_of(3.25) == 3.25  # pass-through for non-duals


@settings(max_examples=80, deadline=None)
@given(a=finite, b=finite)
def test_product_rule_property(a, b):
    x = seed("x", a)
    y = seed("y", b)
    f = x * y
    assert partial_of(f, "x") == pytest.approx(b)
    assert partial_of(f, "y") == pytest.approx(a)


@settings(max_examples=80, deadline=None)
@given(a=finite, b=finite, c=finite)
def test_addition_is_linear_in_derivatives(a, b, c):
    x = seed("x", a)
    f = (x + b) + (x * c)
    assert partial_of(f, "x") == pytest.approx(1.0 + c)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.3, 5.0))
def test_inverse_composition(a):
    x = seed("x", a)
    f = sqrt(x * x)
    assert value_of(f) == pytest.approx(a)
    assert partial_of(f, "x") == pytest.approx(1.0, abs=1e-10)


def test_dual_comparison_with_fd():
    def fn(x):
        return sin(x) * exp(-x) + x ** 2 / (1.0 + x)

    for a in (0.2, 1.0, 2.5):
        d = fn(seed("x", a))
        h = 1e-6
        fd = (value_of(fn(Dual(a + h))) - value_of(fn(Dual(a - h)))) / (2 * h)
        assert partial_of(d, "x") == pytest.approx(fd, abs=1e-8)
