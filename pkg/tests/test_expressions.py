import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfcalc.expressions import (Num, ParseError, Var, parse_expr,
                                  substitute)

VARS = ("x1", "x2", "x3", "t")


def ev(expr, **env):
    full = {"x1": 0.0, "x2": 0.0, "x3": 0.0, "t": 0.0}
    full.update(env)
    return expr.evaluate(full)


def test_arithmetic_and_precedence():
    e = parse_expr("1 + 2*x1 - x2/4", VARS)
    assert ev(e, x1=3.0, x2=8.0) == pytest.approx(5.0)
    assert ev(parse_expr("2^3", VARS)) == pytest.approx(8.0)
    assert ev(parse_expr("-x1^2", VARS), x1=3.0) == pytest.approx(-9.0)
    assert ev(parse_expr("(1+2)*(3-1)", VARS)) == pytest.approx(6.0)


def test_functions():
    e = parse_expr("sin(x1) + cos(x2) + exp(x3) + sqrt(t)", VARS)
    val = ev(e, x1=0.3, x2=0.4, x3=0.5, t=0.25)
    assert val == pytest.approx(math.sin(0.3) + math.cos(0.4)
                                + math.exp(0.5) + 0.5)


def test_parse_errors():
    for bad in ("x1 +", "sin()", "bogus(x1)", "x9", "1..2", "(x1", "x1 x2"):
        with pytest.raises(ParseError):
            parse_expr(bad, VARS)


def test_diff_matches_finite_difference():
    e = parse_expr("sin(x1*x2) + exp(-x3) * x1^3 / (2 + t)", VARS)
    env = {"x1": 0.7, "x2": -0.4, "x3": 0.2, "t": 0.1}
    h = 1e-6
    for var in VARS:
        up = dict(env, **{var: env[var] + h})
        dn = dict(env, **{var: env[var] - h})
        fd = (e.evaluate(up) - e.evaluate(dn)) / (2 * h)
        assert e.diff(var).evaluate(env) == pytest.approx(fd, abs=1e-8)


def test_diff_of_power_and_quotient():
    e = parse_expr("x1^2.5 / x2", VARS)
    env = {"x1": 2.0, "x2": 3.0, "x3": 0.0, "t": 0.0}
    assert e.diff("x1").evaluate(env) == pytest.approx(2.5 * 2.0 ** 1.5 / 3.0)
    assert e.diff("x2").evaluate(env) == pytest.approx(-(2.0 ** 2.5) / 9.0)


def test_substitute():
    e = parse_expr("x1^2 + t", VARS)
    s = substitute(e, "x1", parse_expr("x2 + 1", VARS))
    assert ev(s, x2=2.0, t=0.5) == pytest.approx(9.5)
    # substitution leaves other variables alone
    assert ev(substitute(e, "x3", Num(7.0)), x1=2.0, t=0.0) == pytest.approx(4.0)


def test_simplifying_constructors():
    zero, one = Num(0.0), Num(1.0)
    x = Var("x1")
    assert isinstance(zero * x, Num)
    assert (one * x) is x
    assert (x + zero) is x
    assert isinstance(parse_expr("0*sin(x1)", VARS).diff("x1"), Num)


def test_evaluate_vectorized():
    e = parse_expr("x1*x2 + sin(t)", VARS)
    x1 = np.linspace(-1, 1, 7)
    out = e.evaluate({"x1": x1, "x2": 2.0, "x3": 0.0, "t": 0.0})
    assert np.allclose(out, 2.0 * x1)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3),
       expr=st.sampled_from(["x1 + x2", "x1*x2", "x1 - x2/2",
                             "sin(x1) * cos(x2)", "exp(x1/4) + x2^2"]))
def test_diff_linearity_property(a, b, expr):
    e = parse_expr(expr, VARS)
    env = {"x1": a, "x2": b, "x3": 0.0, "t": 0.0}
    h = 1e-5
    for var in ("x1", "x2"):
        up = dict(env, **{var: env[var] + h})
        dn = dict(env, **{var: env[var] - h})
        fd = (e.evaluate(up) - e.evaluate(dn)) / (2 * h)
        assert e.diff(var).evaluate(env) == pytest.approx(fd, abs=2e-6, rel=2e-6)
