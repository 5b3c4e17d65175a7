import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hirota_ew.fields import (HIROTA, HYPERCR, Chart, EvaluationError, GridError, GridField,
                              JetField, ParseError, eval_grid, eval_jet, eval_value, fd_partial,
                              from_csv, parse_expr, to_csv, to_text)


@pytest.mark.parametrize("text,value", [
    ("1 + 2*3", 7.0),
    ("2^3 * x ** 2", 32.0),
    ("x^-2", 0.25),
    ("-x^2", -4.0),
    ("(x - 1)/(y + 1)", 1.0 / 4.0),
    ("exp(ln(x)) * 1e-1", 0.2),
    ("sin(0)+cos(0)", 1.0),
])
def test_parser_precedence(text, value):
    assert eval_value(parse_expr(text), HIROTA, (2.0, 3.0, 0.0)) == pytest.approx(value)


@pytest.mark.parametrize("text", ["x +", "exp(x", "2^3^2", "x^1.5", "3 $ 4", "", "tan(x)", "exp"])
def test_parser_rejects_malformed(text):
    with pytest.raises(ParseError):
        parse_expr(text)


def test_unbound_parameter():
    e = parse_expr("eps*x")
    assert e.parameters(HIROTA) == {"eps"}
    with pytest.raises(EvaluationError):
        eval_value(e, HIROTA, (1.0, 0.0, 0.0))
    assert eval_value(e, HIROTA, (1.0, 0.0, 0.0), {"eps": 3.0}) == 3.0
    with pytest.raises(ParseError):
        parse_expr("eps*x + q", parameters={"eps": 1.0})


def test_symbolic_derivative_agrees_with_jet():
    e = parse_expr("y*exp(x) + z*exp(2*x) + x*y^3/(1+z^2)")
    p = (0.2, -0.4, 0.9)
    j = eval_jet(e, HIROTA, p, 3)
    d = e.diff("x").diff("y").diff("y")
    assert eval_value(d, HIROTA, p) == pytest.approx(j.partial(0, 1, 1), rel=1e-13)


def test_jetfield_is_evaluated_once_per_call():
    calls = []

    def fn(p, K):
        calls.append(p)
        return eval_jet(parse_expr("x*y"), HIROTA, p, K)

    f = JetField(fn, "xy")
    j = eval_jet(f, HIROTA, (2.0, 3.0, 0.0), 2)
    assert j.value == 6.0 and j.partial(0, 1) == 1.0
    assert len(calls) == 1


def test_chart_validation():
    assert Chart(("a",)).dim == 1
    with pytest.raises(ValueError):
        Chart(("a", "a"))


def test_fd_second_order_convergence():
    f = parse_expr("sin(X)*cos(T) + Y^2*X")
    errs = []
    for n in (16, 32, 64):
        h = 1.0 / n
        g = GridField.sample(f, HYPERCR, (0.0, 0.0, 0.0), (h, h, h), (n + 1, n + 1, n + 1))
        d = fd_partial(g, "X", "T")
        exact = eval_grid(f.diff("X").diff("T"), HYPERCR, g.axes())
        errs.append(np.abs(d.values - exact)[g.interior()].max())
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(rates) > 1.9


def test_periodic_axis_wraps():
    n = 32
    h = 2 * math.pi / n
    g = GridField.sample(parse_expr("sin(X)"), Chart(("X",)), (0.0,), (h,), (n,), (True,))
    d = fd_partial(g, "X")
    assert np.abs(d.values - np.cos(g.axes()[0])).max() < h * h


def test_csv_roundtrip(tmp_path):
    g = GridField.sample(parse_expr("exp(X)*T - Y/3"), HYPERCR, (0.1, -1.0, 2.0),
                         (0.25, 0.5, 0.125), (3, 4, 2))
    text = to_csv(g, tmp_path / "g.csv")
    assert text.splitlines()[0] == "X,Y,T,value"
    back = from_csv(tmp_path / "g.csv")
    assert back.shape == g.shape
    assert np.array_equal(back.values, g.values)
    assert back.origin == pytest.approx(g.origin)


def test_csv_incomplete_grid_rejected():
    with pytest.raises(GridError):
        from_csv("X,value\n0,1\n")


coef = st.floats(-3, 3, allow_nan=False).map(lambda v: round(v, 3))


@settings(max_examples=50, deadline=None)
@given(coef, coef, coef, st.integers(0, 4))
def test_to_text_roundtrip(a, b, c, k):
    e = parse_expr(f"({a})*x^{k} - ({b})*exp(({c})*y)/(2 + z^2)")
    back = parse_expr(to_text(e))
    p = (0.3, -0.7, 1.1)
    assert eval_value(back, HIROTA, p) == pytest.approx(eval_value(e, HIROTA, p), rel=1e-14,
                                                      abs=1e-14)
