import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hirota_ew import conventions
from hirota_ew.fields import parse_expr
from hirota_ew.twistor import (CURVE_CHART, DEFORM_CHART, CurveFamily, DeformationGenerator,
                               TwistorError, consistency_error, curve_family_from_json,
                               extract_coordinates, heisenberg_constants, heisenberg_pipeline,
                               homogeneity_error, kodaira_deform, nil_family,
                               nil_twistor_function, recursion_step, twistor_series,
                               undeformed_family, verify_wave)


def _grid(n=21, lo=-0.5, hi=0.5):
    ax = np.linspace(lo, hi, n)
    return [ax, ax, ax]


@pytest.mark.parametrize("eps", [1.0, -0.7, 0.25])
def test_nil_series(eps):
    ts = twistor_series(parse_expr("eps*X^2/2", parameters={"eps": eps}), 6,
                        params={"eps": eps})
    X, Y, T = np.meshgrid(*_grid(), indexing="ij")
    expected = [T, Y, X, eps * X ** 2 / 2, eps ** 2 * X ** 3 / 3, eps ** 3 * X ** 4 / 4]
    for i, ref in enumerate(expected):
        assert np.abs(ts.sample(i, _grid()).values - ref).max() <= 1e-10
    # normalisation: psi_i vanishes on the reference line for i >= 3
    assert all(abs(ts.value(i, (0.0, 0.0, 0.37))) < 1e-15 for i in range(3, 6))


def test_series_matches_closed_form_twistor_function():
    eps, lam = 0.8, 0.3
    ts = twistor_series(parse_expr(f"{eps}*X^2/2"), 9, order=12)
    psi = nil_twistor_function(eps, lam)
    p = (0.2, -0.1, 0.4)
    series = sum(lam ** i * ts.value(i, p) for i in range(9))
    exact = psi.evaluate({"X": p[0], "Y": p[1], "T": p[2], "eps": eps})
    assert series == pytest.approx(exact, abs=lam ** 9)


def test_wave_equation_on_solutions():
    for H in ("X^2/2", "Y^2/2 + X*T + T^3", "0.3*X^2/2"):
        ts = twistor_series(parse_expr(H), 5)
        for p in [(0.1, 0.2, -0.3), (-0.4, 0.0, 0.25)]:
            assert all(abs(verify_wave(ts, i, p)) <= 1e-10 for i in range(5))


def test_recursion_detects_non_solution():
    # H = X^2/2 + d X Y^3 fails at step 3 -> 4 with defect 6 d
    d = 0.1
    ts = twistor_series(parse_expr(f"X^2/2 + {d}*X*Y^3"), 4)
    assert consistency_error(ts, 2) == 0.0
    assert consistency_error(ts, 3) == pytest.approx(6 * d)
    with pytest.raises(TwistorError):
        recursion_step(ts)
    with pytest.raises(TwistorError):
        recursion_step(ts, 1)


def test_extraction_of_undeformed_and_nil_families():
    ex = extract_coordinates(undeformed_family(), (0.3, -0.2, 0.5))
    assert (ex.T, ex.Y, ex.X) == (0.3, -0.2, 0.5)
    assert np.abs(ex.H.coeffs).max() == 0.0
    eps = 0.6
    ex = extract_coordinates(nil_family(eps), (0.1, 0.2, 0.3))
    assert ex.X == pytest.approx(0.3)
    assert ex.H.value == pytest.approx(eps * 0.3 ** 2 / 2, abs=1e-14)
    assert ex.H.partial(0, 0) == pytest.approx(eps, abs=1e-12)
    assert abs(ex.residual) < 1e-12


def test_curve_family_json():
    cf = curve_family_from_json(json.dumps({"psi": "m0 + l*m1 + c*l^2*m2", "params": {"c": 2}}))
    assert cf.value((1.0, 1.0, 1.0), 2.0) == 1 + 2 + 8


def test_generator_homogeneity():
    assert conventions.PSI_WEIGHT == 1
    assert homogeneity_error(DeformationGenerator(parse_expr("psi^2"))) < 1e-14
    assert homogeneity_error(DeformationGenerator(parse_expr("psi*pi0"),
                                                  parse_expr("pi0/pi1"))) < 1e-14
    assert homogeneity_error(DeformationGenerator(parse_expr("psi^3"))) > 0.1
    with pytest.raises(TwistorError):
        kodaira_deform(undeformed_family(), DeformationGenerator(parse_expr("psi")), 0.1)


def test_deformation_closed_form():
    eps = 0.1
    out = kodaira_deform(undeformed_family(), DeformationGenerator(parse_expr("psi^2")), eps)
    rng = np.random.default_rng(2)
    for _ in range(5):
        m, lam = rng.uniform(-0.5, 0.5, 3), rng.uniform(-1, 1)
        psi = m[0] + lam * m[1] + lam ** 2 * m[2]
        assert out.value(m, lam) == pytest.approx(psi / (1 - eps * psi), abs=1e-10)
    for m in rng.uniform(-0.5, 0.5, (4, 3)):
        assert abs(extract_coordinates(out, m).residual) <= 1e-6


def test_deformation_linear_in_psi():
    # f = psi pi0 with pi0 = l in the affine chart gives psi exp(eps l)
    gen = DeformationGenerator(parse_expr("psi*pi0"))
    out = kodaira_deform(undeformed_family(), gen, 0.3)
    m, lam = (0.1, 0.2, 0.3), 0.5
    psi = 0.1 + 0.1 + 0.075
    assert out.value(m, lam) == pytest.approx(psi * np.exp(0.3 * lam), abs=1e-10)


@pytest.mark.parametrize("eps,a,b", [(1.0, 1.0, 2.0), (-0.5, 2.0, 1.0), (2.0, -1.0, 3.0)])
def test_heisenberg_pipeline(eps, a, b):
    rep = heisenberg_pipeline(eps, a, b)
    failed = [c["name"] for c in rep["checks"] if not c["pass"]]
    assert not failed
    assert rep["lambda4"] == 1 - b / a
    assert rep["lie_sign"] == -1


def test_heisenberg_reference_values():
    c = heisenberg_constants(1.0, 1.0, 2.0)
    assert c == {"lambda4": -1.0, "cx": 1.0, "cy": 2.0}
    assert conventions.hirota_to_nil(0.0, 1.0, 2.0) == -1.0
    with pytest.raises(TwistorError):
        heisenberg_pipeline(1.0, 1.0, 0.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 1.5), st.floats(-1, 1))
def test_series_wave_property(eps, t0):
    ts = twistor_series(parse_expr(f"{eps}*X^2/2 + T^3 - T"), 5, t0=t0)
    assert all(c == 0.0 for c in ts.consistency)
    p = (0.1, -0.2, t0 + 0.1)
    assert max(abs(verify_wave(ts, i, p)) for i in range(5)) < 1e-10
