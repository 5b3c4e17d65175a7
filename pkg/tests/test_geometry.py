import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hirota_ew.fields import HYPERCR, parse_expr
from hirota_ew.geometry import (DegenerateGradientError, GeometryError, build_hirota_weyl,
                                build_hypercr_weyl, conformal_rescale, curvature,
                                hirota_extension, hirota_gauge, jones_tod_reduce,
                                lie_derivative_metric)
from hirota_ew.laxweb import hypercr_residual

# trace-free Einstein-Weyl tensor of w = x y + z, (a, b) = (1, 2), at (1, 1, 1); sympy
E_XY_PLUS_Z = np.array([[-2 / 3, 1 / 6, 1 / 6],
                        [1 / 6, -2 / 3, 1 / 6],
                        [1 / 6, 1 / 6, 1 / 3]])
RICCI_XY_PLUS_Z = np.array([[-0.5, 0.0, 0.5], [0.0, -0.5, 0.5], [0.5, 0.5, 1.0]])


def test_non_solution_matches_symbolic_oracle():
    r = curvature(build_hirota_weyl(parse_expr("x*y+z"), 1, 2), (1, 1, 1))
    assert np.allclose(r.E, E_XY_PLUS_Z, atol=1e-12)
    assert np.allclose(r.ricci, RICCI_XY_PLUS_Z, atol=1e-12)
    assert abs(r.trace) < 1e-12


def test_hypercr_non_solution_oracle():
    # H = X T + Y^3/6 at (0.2, 0.3, -0.1): only E_TT = -2 survives (sympy)
    r = curvature(build_hypercr_weyl(parse_expr("X*T + Y^3/6")), (0.2, 0.3, -0.1))
    expected = np.zeros((3, 3))
    expected[2, 2] = -2.0
    assert np.allclose(r.E, expected, atol=1e-12)


@pytest.mark.parametrize("w,a,b", [
    ("y*exp(x) + z*exp(2*x)", 1, 2),
    ("y*exp(2*x) + z*exp(-x)", 2, -1),
    ("y*exp(1.5*x) + z*exp(-4.5*x)", -1, 3),
])
def test_exponential_solutions_are_einstein_weyl(w, a, b):
    W = build_hirota_weyl(parse_expr(w), a, b)
    rng = np.random.default_rng(3)
    for p in rng.uniform(0.3, 1.2, (6, 3)):
        assert curvature(W, p).norm < 1e-9


def test_flat_case():
    W = build_hirota_weyl(parse_expr("x+y+z"), 1, 2)
    r = curvature(W, (0.3, -0.2, 1.1))
    assert np.all(r.E == 0.0)
    assert np.all(W.one_form((0.3, -0.2, 1.1)) == 0.0)


def test_guards():
    W = build_hirota_weyl(parse_expr("y*exp(x) + z^2"), 1, 2)
    with pytest.raises(DegenerateGradientError):
        curvature(W, (0.0, 1.0, 0.0))
    with pytest.raises(GeometryError):
        build_hirota_weyl(parse_expr("x"), 1, 1)


def test_conformal_rescale_leaves_E_in_the_class():
    W = build_hirota_weyl(parse_expr("x*y+z"), 1, 2)
    R = conformal_rescale(W, parse_expr("1 + x^2 + y"))
    p = (1.0, 1.0, 1.0)
    # the trace-free covariant E has conformal weight zero
    e0, e1 = curvature(W, p).E, curvature(R, p).E
    assert np.allclose(e1, e0, atol=1e-10)


@pytest.mark.parametrize("w,a,b,points", [
    ("y*exp(x) + z*exp(2*x)", 1, 2, [(0.1, 0.7, 1.3), (-0.4, 1.1, 0.6)]),
    ("x+y+z", 1, 2, [(0.3, -0.2, 0.5)]),
    ("y*exp(1.3*x) + z*exp(-0.7*x)", 1.3, -0.7, [(0.2, 0.8, 0.9)]),
    ("y*exp(-x) + z*exp(3*x)", -1, 3, [(0.2, -0.8, -0.9)]),
    ("y*exp(-x) + z*exp(-2*x)", -1, -2, [(0.1, 0.6, 0.4)]),
])
def test_jones_tod_matches_hirota_gauge(w, a, b, points):
    we = parse_expr(w)
    R = hirota_gauge(jones_tod_reduce(hirota_extension(we, a, b)), we)
    W = build_hirota_weyl(we, a, b)
    for p in points:
        assert np.allclose(R.metric(p), W.metric(p), atol=1e-10, rtol=0)
        assert np.allclose(R.one_form(p), W.one_form(p), atol=1e-10, rtol=0)


def test_jones_tod_output_is_einstein_weyl():
    we = parse_expr("y*exp(x) + z*exp(2*x)")
    R = jones_tod_reduce(hirota_extension(we, 1, 2))
    assert curvature(R, (0.2, 0.9, 1.1)).norm < 1e-8


def test_killing_vectors_of_nil():
    W = build_hypercr_weyl(parse_expr("X^2/2"))
    gen = [parse_expr(t) for t in ("0", "0", "1")]  # d_T
    assert np.abs(lie_derivative_metric(W.h, gen, HYPERCR, (0.3, 0.1, 0.2))).max() == 0.0


coef = st.floats(-1, 1, allow_nan=False).map(lambda v: round(v, 3))


@settings(max_examples=25, deadline=None)
@given(coef, coef, coef, st.tuples(coef, coef, coef))
def test_hypercr_family_with_free_function_is_einstein_weyl(c1, c2, c3, p):
    # H = Y^2/2 + X T + g(T) solves the equation for any g
    H = parse_expr(f"Y^2/2 + X*T + ({c1})*T^2 + ({c2})*T^3 + ({c3})*sin(T)")
    assert abs(hypercr_residual(H, p)) < 1e-14
    assert curvature(build_hypercr_weyl(H), p).norm < 1e-10


@settings(max_examples=25, deadline=None)
@given(coef.filter(lambda v: abs(v) > 0.05), st.tuples(coef, coef, coef))
def test_hypercr_E_detects_non_solutions(c, p):
    H = parse_expr(f"X*T + ({c})*Y^3")
    rho = hypercr_residual(H, p)
    assert abs(rho - (1 - 6 * c * p[1])) < 1e-12
    assert curvature(build_hypercr_weyl(H), p).norm > 1e-3
