import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hirota_ew import conventions
from hirota_ew.fields import HIROTA, parse_expr
from hirota_ew.geometry import DegenerateGradientError, GeometryError, build_hirota_weyl
from hirota_ew.jets import jet_coordinates
from hirota_ew.laxweb import (HierarchySpec, commutator, hierarchy_lax, hierarchy_residual,
                              hirota_lax, hirota_residual, hypercr_lax, hypercr_residual,
                              hypercr_residual_from_jet, lax_plane, plane_distance,
                              residual_sweep, span_compare, span_rank, veronese_eval,
                              veronese_fields, veronese_plane, vector_field, write_residual_csv)

SOL = parse_expr("y*exp(x) + z*exp(2*x)")


def test_residual_values():
    # (b - a) w_x w_yz + a w_y w_zx - b w_z w_xy = -2 for w = x y + z, (a, b) = (1, 2)
    assert hirota_residual(parse_expr("x*y+z"), 1, 2, (0.3, 0.7, -2.0)) == -2.0
    assert abs(hirota_residual(SOL, 1, 2, (0.4, 1.2, -0.3))) < 1e-13
    assert hypercr_residual(parse_expr("X*T"), (0.1, 0.2, 0.3)) == 1.0
    X, Y, T = jet_coordinates((0.2, 0.1, 0.0), 2)
    assert hypercr_residual_from_jet(0.5 * X * X) == 0.0


def test_commutator_of_coordinate_fields():
    chart = HIROTA
    U = vector_field(chart, [parse_expr("y"), parse_expr("0"), parse_expr("0")])
    V = vector_field(chart, [parse_expr("0"), parse_expr("x"), parse_expr("0")])
    C = commutator(U, V, (1.0, 2.0, 3.0))
    # [y d_x, x d_y] = y d_y - x d_x
    assert np.allclose(C[0], [-1.0, 2.0, 0.0])


def test_lax_plane_matches_veronese_plane():
    L0, L1 = hirota_lax(SOL, 1, 2)
    vt = veronese_fields(SOL, 1, 2)
    p = (0.2, 0.9, 1.4)
    for lam in (0.5, 1.0, -2.0, 3.7):
        A = lax_plane(L0, L1, p, lam)
        assert span_compare(A, veronese_plane(vt, conventions.lax_to_veronese(lam), p)) == 2
        assert plane_distance(A, veronese_plane(vt, conventions.lax_to_veronese(lam), p)) < 1e-12
        # the naive identification mu = lambda picks a different plane
        assert span_compare(A, veronese_plane(vt, lam, p)) == 3


def test_veronese_null_and_orthogonal():
    vt = veronese_fields(SOL, 1, 2)
    W = build_hirota_weyl(SOL, 1, 2)
    p = (-0.3, 0.8, 1.1)
    h = W.metric(p)
    for lam in (-1.0, 0.0, 0.4, 2.5):
        V = veronese_eval(vt, lam, p)
        P = veronese_plane(vt, lam, p)
        s = np.linalg.norm(V) ** 2 * np.abs(h).max()
        assert abs(V @ h @ V) / s < 1e-13
        assert max(abs(V @ h @ P[0]), abs(V @ h @ P[1])) / s < 1e-13


def test_veronese_degenerate_gradient():
    vt = veronese_fields(parse_expr("y*exp(x) + z^2"), 1, 2)
    with pytest.raises(DegenerateGradientError):
        veronese_eval(vt, 1.0, (0.0, 1.0, 0.0))


def test_span_rank():
    assert span_rank([[1, 0, 0], [0, 1, 0], [1, 1, 1e-13]]) == 2
    assert span_rank([[0, 0, 0]]) == 0


def test_hierarchy_three_times():
    spec = HierarchySpec((1.0, 2.0, 3.0))
    w = parse_expr("x0*exp(2*x/1) + x1*exp(2*x/2) + x2*exp(2*x/3)")
    p = (0.3, 0.5, -0.4, 0.9)
    for i in range(3):
        for j in range(i + 1, 3):
            assert abs(hierarchy_residual(w, spec, i, j, p)) < 1e-12
    Ls = hierarchy_lax(w, spec)
    for i in range(3):
        for j in range(i + 1, 3):
            assert np.abs(commutator(Ls[i], Ls[j], p)).max() < 1e-12


def test_hierarchy_two_times_is_minus_hirota():
    # x0 plays z (constant a), x1 plays y (constant b)
    spec = HierarchySpec((1.0, 2.0))
    wh = parse_expr("x*y^2 + exp(z)*y + z^3*x")
    wk = parse_expr("x*x1^2 + exp(x0)*x1 + x0^3*x")
    for p in [(0.3, 0.5, -0.4), (1.1, -0.2, 0.7)]:
        q = (p[0], p[2], p[1])
        assert hierarchy_residual(wk, spec, 0, 1, q) == pytest.approx(
            -hirota_residual(wh, 1, 2, p), abs=1e-13)


def test_hierarchy_spec_validation():
    with pytest.raises(ValueError):
        HierarchySpec((1.0, 1.0))
    with pytest.raises(ValueError):
        HierarchySpec((0.0, 1.0))
    with pytest.raises(GeometryError):
        hirota_lax(SOL, 2, 2)


def test_residual_sweep_csv(tmp_path):
    L0, L1 = hirota_lax(SOL, 1, 2)
    rows = residual_sweep(L0, L1, [(0.1, 0.5, 0.5), (0.2, 0.4, 0.3)], [0.0, 1.0])
    path = tmp_path / "sweep.csv"
    write_residual_csv(rows, path)
    with open(path) as fh:
        data = list(csv.reader(fh))
    assert data[0] == ["x", "y", "z", "lambda", "residual"]
    assert len(data) == 5
    assert max(float(r[-1]) for r in data[1:]) < 1e-13


coef = st.integers(-3, 3)


@settings(max_examples=30, deadline=None)
@given(st.lists(coef, min_size=6, max_size=6), st.floats(0.5, 2.0), st.floats(-2.0, -0.5))
def test_commutator_identity_hirota(c, a, b):
    w = parse_expr(f"x + ({c[0]})*x*y*z + ({c[1]})*y^2*z + ({c[2]})*x^3 + ({c[3]})*z^2*x "
                   f"+ ({c[4]})*y + ({c[5]})*x^2*y")
    L0, L1 = hirota_lax(w, a, b)
    p = (1.3, 0.4, -0.6)
    wx = w.diff("x").evaluate({"x": p[0], "y": p[1], "z": p[2]})
    if abs(wx) < 1e-3:
        return
    C = commutator(L0, L1, p)
    rho = hirota_residual(w, a, b, p)
    expect = np.zeros_like(C)
    expect[1, 0] = rho / wx ** 2
    assert np.abs(C - expect).max() <= 1e-10 * max(1.0, abs(expect).max())


@settings(max_examples=30, deadline=None)
@given(st.lists(coef, min_size=5, max_size=5))
def test_commutator_identity_hypercr(c):
    H = parse_expr(f"({c[0]})*X^2*Y + ({c[1]})*X*T + ({c[2]})*Y^3 + ({c[3]})*T^2*X + ({c[4]})*Y*T")
    L0, L1 = hypercr_lax(H)
    p = (0.2, -0.5, 0.8)
    C = commutator(L0, L1, p)
    expect = np.zeros_like(C)
    expect[2, 0] = hypercr_residual(H, p)
    assert np.abs(C - expect).max() <= 1e-10
