"""Twistor functions of hyper-CR structures.

The kernel of the Lax pair ``L0 = d_Y - lam (d_T + H_Y d_X)``,
``L1 = d_X - lam (d_Y + H_X d_X)`` is spanned by functions
``psi = sum_i lam^i psi_i`` with ``psi_0 = T``, ``psi_1 = Y``, ``psi_2 = X``,
``psi_3 = H``. Here the coefficients are computed as Taylor polynomials
about a point on the reference line ``X = Y = 0``; integration of
polynomials is exact, so no quadrature error enters.

Curve families ``lam -> psi(m; lam)`` are handled on the chart
``(m0, m1, m2, l)``; deformations integrate ``dpsi/deps = f``,
``dpi_k/deps = g pi_k`` with RK4 on jets.
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import conventions
from .fields import Chart, Const, Expr, GridField, HIROTA, HYPERCR, JetField, eval_jet, eval_jets
from .fields import parse_expr
from .fields.expr import as_expr
from .fields.expr import exp as expr_exp
from .geometry import build_hypercr_weyl, lie_derivative_metric
from .jets import Jet, jet_coordinate, jet_matrix_inverse
from .laxweb import (LambdaVectorField, hirota_lax, hirota_residual, hypercr_lax,
                     hypercr_residual_from_jet, lax_plane, span_rank, vector_field)

CURVE_CHART = Chart(("m0", "m1", "m2", "l"))
DEFORM_CHART = Chart(("psi", "pi0", "pi1"))
X, Y, T = 0, 1, 2


class TwistorError(ValueError):
    pass


# -- series recursion ----------------------------------------------------------------

@dataclass
class TwistorSeries:
    """Coefficients ``psi_i`` as polynomial jets of degree ``order`` in (X, Y, T)."""

    H: Expr
    order: int = 10
    t0: float = 0.0
    params: Mapping[str, float] = field(default_factory=dict)
    coeffs: list[Jet] = field(default_factory=list)
    consistency: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.H = as_expr(self.H)
        if self.order < 3:
            raise TwistorError("series order must be at least 3")
        base = (0.0, 0.0, float(self.t0))
        self._Hj = eval_jet(self.H, HYPERCR, base, self.order, self.params)
        if not self.coeffs:
            self.coeffs = [jet_coordinate(i, base, 3, self.order) for i in (T, Y, X)]
            self.consistency = [0.0, 0.0, 0.0]

    @property
    def base(self) -> tuple[float, float, float]:
        return (0.0, 0.0, float(self.t0))

    def value(self, i: int, p) -> float:
        return self.coeffs[i].polynomial(p)

    def jet_at(self, i: int, p, K: int = 2) -> Jet:
        j = self.coeffs[i].recenter(p)
        return j.truncate(min(K, j.order))

    def sample(self, i: int, axes: Sequence[np.ndarray]) -> GridField:
        XX, YY, TT = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([XX.ravel(), YY.ravel(), TT.ravel()], axis=1)
        vals = _poly_eval(self.coeffs[i], pts).reshape(XX.shape)
        origin = tuple(float(a[0]) for a in axes)
        spacing = tuple(float(a[1] - a[0]) for a in axes)
        return GridField(HYPERCR, origin, spacing, vals, (False, False, False))


def _poly_eval(j: Jet, pts: np.ndarray) -> np.ndarray:
    from .jets import multi_indices
    mis = np.array(multi_indices(j.dim, j.order))
    dx = pts - np.asarray(j.base_point)
    # per-axis power tables, gathered by multi-index
    pows = dx[:, :, None] ** np.arange(j.order + 1)[None, None, :]
    mono = np.ones((len(pts), len(mis)))
    for ax in range(j.dim):
        mono *= pows[:, ax, mis[:, ax]]
    return mono @ j.coeffs


def _h_derivative(ts: TwistorSeries, axis: int, order: int) -> Jet:
    return ts._Hj.diff(axis).truncate(order)


def recursion_sources(ts: TwistorSeries, i: int) -> tuple[Jet, Jet]:
    """``(d_T + H_Y d_X) psi_i`` and ``(d_Y + H_X d_X) psi_i`` (order ``N - 1``)."""
    psi = ts.coeffs[i]
    N = ts.order
    HX = _h_derivative(ts, X, N - 1)
    HY = _h_derivative(ts, Y, N - 1)
    dX, dY, dT = psi.diff(X), psi.diff(Y), psi.diff(T)
    return dT + HY * dX, dY + HX * dX


def consistency_error(ts: TwistorSeries, i: int) -> float:
    """Largest Taylor coefficient of ``d_X gY - d_Y gX``; zero iff the step is integrable."""
    gY, gX = recursion_sources(ts, i)
    d = gY.diff(X) - gX.diff(Y)
    return float(np.abs(d.coeffs).max())


def recursion_step(ts: TwistorSeries, i: int | None = None, tol: float = 1e-9) -> Jet:
    """Append ``psi_{i+1}`` obtained by integrating from the reference line ``X = Y = 0``.

    ``psi_{i+1} = int_0^X gX(s, 0, T) ds + int_0^Y gY(X, s, T) ds`` so that
    ``psi_{i+1}(0, 0, T) = 0``.
    """
    i = len(ts.coeffs) - 1 if i is None else i
    if i != len(ts.coeffs) - 1:
        raise TwistorError("steps must extend the series in order")
    if i < 2:
        raise TwistorError("psi_0 .. psi_2 are fixed by the normalisation")
    err = consistency_error(ts, i)
    if err > tol:
        raise TwistorError(f"recursion step {i} -> {i + 1} inconsistent (|dX gY - dY gX| = "
                           f"{err:.3e}); H does not solve the hyper-CR equation")
    gY, gX = recursion_sources(ts, i)
    nxt = gX.drop_axis_powers(Y).integrate(X) + gY.integrate(Y)
    ts.coeffs.append(nxt)
    ts.consistency.append(err)
    return nxt


def twistor_series(H, n_terms: int = 5, order: int = 10, params=None, t0: float = 0.0,
                   tol: float = 1e-9) -> TwistorSeries:
    """Series with ``psi_0 .. psi_{n_terms - 1}``."""
    ts = TwistorSeries(as_expr(H), order, t0, dict(params or {}))
    while len(ts.coeffs) < n_terms:
        recursion_step(ts, tol=tol)
    return ts


def verify_wave(ts: TwistorSeries, i: int, p) -> float:
    """``(d_X d_T - d_Y^2 + H_Y d_X^2 - H_X d_X d_Y) psi_i`` at ``p``."""
    j = ts.jet_at(i, p, 2)
    h = eval_jet(ts.H, HYPERCR, p, 1, ts.params)
    return (j.partial(X, T) - j.partial(Y, Y) + h.partial(Y) * j.partial(X, X)
            - h.partial(X) * j.partial(X, Y))


# -- curve families ------------------------------------------------------------------

@dataclass(frozen=True)
class CurveFamily:
    """``psi(m0, m1, m2, l)``: for each ``m`` the section ``l -> (l, psi)``."""

    psi: Expr | JetField
    params: Mapping[str, float] = field(default_factory=dict)

    def jet(self, m, lam: float, K: int) -> Jet:
        return eval_jet(self.psi, CURVE_CHART, tuple(m) + (float(lam),), K, self.params)

    def value(self, m, lam: float) -> float:
        return self.jet(m, lam, 0).value


def curve_family_from_json(text: str) -> CurveFamily:
    data = json.loads(text)
    params = {k: float(v) for k, v in data.get("params", {}).items()}
    psi = parse_expr(data["psi"], coordinates=CURVE_CHART.names, parameters=params)
    return CurveFamily(psi, params)


def undeformed_family() -> CurveFamily:
    return CurveFamily(parse_expr("m0 + l*m1 + l^2*m2"))


def nil_family(eps: float) -> CurveFamily:
    """``psi = m0 + l m1 - (l / eps) ln(1 - l eps m2)``."""
    if eps == 0:
        raise TwistorError("eps must be nonzero")
    return CurveFamily(parse_expr("m0 + l*m1 - (l/eps)*ln(1 - l*eps*m2)", parameters={"eps": eps}),
                       {"eps": float(eps)})


def invert_jet_map(F: Sequence[Jet]) -> list[Jet]:
    """Jet of the inverse of ``m -> F(m)`` at ``F(m*)`` (same order as ``F``)."""
    n, K = len(F), F[0].order
    m0 = F[0].base_point
    u0 = tuple(f.value for f in F)
    J = np.array([f.gradient() for f in F])
    if abs(np.linalg.det(J)) < 1e-12 * max(1.0, np.abs(J).max() ** n):
        raise TwistorError("curve family is not in general position (singular Jacobian)")
    Jinv = np.linalg.inv(J)
    du = [jet_coordinate(i, u0, n, K) - u0[i] for i in range(n)]
    G = [m0[i] + sum(Jinv[i, k] * du[k] for k in range(n)) for i in range(n)]
    for _ in range(K):
        FG = [f.compose(G) for f in F]
        R = [FG[k] - u0[k] - du[k] for k in range(n)]
        G = [G[i] - sum(Jinv[i, k] * R[k] for k in range(n)) for i in range(n)]
    return G


@dataclass(frozen=True)
class Extraction:
    """Coordinates and the jet of ``H`` in (X, Y, T) order."""

    T: float
    Y: float
    X: float
    H: Jet

    @property
    def residual(self) -> float:
        return hypercr_residual_from_jet(self.H)


def extract_coordinates(cf: CurveFamily, m, K: int = 2) -> Extraction:
    """Read ``(T, Y, X, H)`` off the ``lam``-expansion of ``psi`` at ``lam = 0``.

    ``T = psi``, ``Y = d_lam psi``, ``X = d_lam^2 psi / 2``, ``H = d_lam^3 psi / 6``;
    ``H`` is re-expressed as a jet in (X, Y, T) by inverting ``m -> (X, Y, T)``.
    """
    full = cf.jet(m, 0.0, K + 3)
    lam_axis = 3
    Tm, Ym, Xm, Hm = (full.slice_axis(lam_axis, k).truncate(K) for k in range(4))
    G = invert_jet_map([Xm, Ym, Tm])
    Hu = Hm.compose(G)
    return Extraction(Tm.value, Ym.value, Xm.value, Hu)


# -- deformations --------------------------------------------------------------------

@dataclass(frozen=True)
class DeformationGenerator:
    """``f`` (degree 2) and ``g`` (degree 0) in ``(psi, pi0, pi1)``."""

    f: Expr
    g: Expr = Const(0.0)
    params: Mapping[str, float] = field(default_factory=dict)

    def rates(self, psi, pi0, pi1):
        env = {**self.params, "psi": psi, "pi0": pi0, "pi1": pi1}
        memo: dict = {}
        return as_expr(self.f).evaluate(env, memo), as_expr(self.g).evaluate(env, memo)


def homogeneity_error(gen: DeformationGenerator, samples: int = 8, seed: int = 0) -> float:
    """Worst relative deviation from ``f(t.) = t^2 f`` and ``g(t.) = g`` for ``t`` in {2, 3}."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        q = rng.uniform(0.2, 0.9, 3) * rng.choice([-1.0, 1.0], 3)
        f0, g0 = gen.rates(*q)
        for t in (2.0, 3.0):
            f1, g1 = gen.rates(*(t * q))
            worst = max(worst, abs(f1 - t * t * f0) / max(1.0, abs(t * t * f0)),
                        abs(g1 - g0) / max(1.0, abs(g0)))
    return float(worst)


def _rk4_jets(state, gen: DeformationGenerator, eps: float, steps: int):
    h = eps / steps

    def rhs(s):
        psi, pi0, pi1 = s
        f, g = gen.rates(psi, pi0, pi1)
        return (f, g * pi0, g * pi1)

    def axpy(s, k, a):
        return tuple(si + a * ki for si, ki in zip(s, k))

    for _ in range(steps):
        k1 = rhs(state)
        k2 = rhs(axpy(state, k1, 0.5 * h))
        k3 = rhs(axpy(state, k2, 0.5 * h))
        k4 = rhs(axpy(state, k3, h))
        state = tuple(s + (h / 6.0) * (a + 2 * b + 2 * c + d)
                      for s, a, b, c, d in zip(state, k1, k2, k3, k4))
        for s in state:
            v = s.coeffs if isinstance(s, Jet) else np.asarray(s)
            if not np.all(np.isfinite(v)):
                raise TwistorError("non-finite values during the deformation")
    return state


def kodaira_deform(start: CurveFamily, gen: DeformationGenerator, eps_target: float,
                   steps: int = 40, tol: float = 1e-10) -> CurveFamily:
    """Integrate ``dpsi/deps = f``, ``dpi_k/deps = g pi_k`` from ``eps = 0`` to ``eps_target``.

    Starts in the affine chart ``pi0 = l``, ``pi1 = 1``; the result is
    ``psi / pi1^w`` with ``w`` the weight recorded in the conventions file.
    ``pi0 / pi1`` is invariant along the flow, so the fibre ``l`` is kept.
    """
    if steps < 1:
        raise TwistorError("steps must be positive")
    err = homogeneity_error(gen)
    if err > tol:
        raise TwistorError(f"generator fails the homogeneity check (error {err:.3e})")
    weight = conventions.PSI_WEIGHT

    @functools.lru_cache(maxsize=256)
    def fn(p: tuple, K: int) -> Jet:
        psi = eval_jet(start.psi, CURVE_CHART, p, K, start.params)
        pi0 = jet_coordinate(3, p, 4, K)
        pi1 = Jet.constant(1.0, 4, K, p)
        psi, pi0, pi1 = _rk4_jets((psi, pi0, pi1), gen, eps_target, steps)
        return psi / pi1 ** weight

    return CurveFamily(JetField(fn, f"deformed to eps={eps_target}"), start.params)


# -- the Heisenberg example ----------------------------------------------------------

def nil_twistor_function(eps: float, lam: float) -> Expr:
    return parse_expr(f"T + ({lam!r})*Y - ({lam!r}/eps)*ln(1 - ({lam!r})*eps*X)",
                      parameters={"eps": eps})


def nil_twistor_at_infinity(eps: float) -> Expr:
    """``psi / lam`` at ``lam = oo`` up to an additive constant: ``Y - ln(-eps X) / eps``."""
    return parse_expr("Y - ln(-eps*X)/eps", parameters={"eps": eps})


def heisenberg_coordinates(eps: float) -> tuple[Expr, Expr, Expr]:
    """``x = T``, ``y = X e^{-eps Y}``, ``z = (1 - eps X) e^{-eps (T + Y)}``."""
    pr = {"eps": eps}
    return (parse_expr("T"), parse_expr("X*exp(-eps*Y)", parameters=pr),
            parse_expr("(1 - eps*X)*exp(-eps*(T + Y))", parameters=pr))


def heisenberg_constants(eps: float, a: float, b: float) -> dict:
    """``lam4`` and the rescaling ``x^ = cx x``, ``y^ = cy y``, ``z^ = z``.

    In these coordinates ``(1 - eps lam4 X) e^{-eps (T / lam4 + Y)}`` equals
    ``y^ e^{a x^} + z^ e^{b x^}``.
    """
    lam4 = 1.0 - b / a
    return {"lambda4": lam4, "cx": -eps / (a * lam4), "cy": eps * (1.0 - lam4)}


def _parallel_error(u: np.ndarray, v: np.ndarray) -> float:
    """``|u ^ v| / (|u| |v|)``: sine of the angle between two covectors."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return float("inf")
    M = np.outer(u, v) - np.outer(v, u)
    return float(np.linalg.norm(M) / (np.sqrt(2) * nu * nv))


def _grad(f: Expr, p, params) -> np.ndarray:
    return eval_jet(f, HYPERCR, p, 1, params).gradient()


def _check(name: str, residual: float, tol: float, **extra) -> dict:
    return {"name": name, "max_residual": float(residual), "tolerance": tol,
            "pass": bool(np.isfinite(residual) and residual <= tol), **extra}


def heisenberg_pipeline(eps: float = 1.0, a: float = 1.0, b: float = 2.0, n_points: int = 12,
                        seed: int = 0, tol: float = 1e-10) -> dict:
    """Certify the Hirota solution read off the Heisenberg Veronese web."""
    from .poisson import heisenberg_invariance, vector_commutator

    if eps == 0 or a == 0 or a == b:
        raise TwistorError("need eps != 0, a != 0 and a != b")
    if b == 0:
        raise TwistorError("b = 0 makes lambda4 = 1, where the coordinate z degenerates")
    consts = heisenberg_constants(eps, a, b)
    lam4 = consts["lambda4"]
    rng = np.random.default_rng(seed)
    # X eps < 0 keeps every logarithm real, including the chart at infinity
    pts = np.column_stack([-np.sign(eps) * rng.uniform(0.2, 0.8, n_points) / abs(eps),
                           rng.uniform(-0.5, 0.5, n_points), rng.uniform(-0.5, 0.5, n_points)])
    checks = [_check("lambda4", abs(lam4 - (1.0 - b / a)), 0.0, value=lam4)]
    pr = {"eps": eps}

    # (i) the recovered w solves the Hirota equation
    w = parse_expr(f"y*exp({a!r}*x) + z*exp({b!r}*x)")
    xyz = np.column_stack([rng.uniform(-1, 1, n_points), rng.uniform(0.2, 2, n_points),
                           rng.uniform(0.2, 2, n_points)])
    r = max(abs(hirota_residual(w, a, b, p)) for p in xyz)
    checks.append(_check("hirota_residual", r, 1e-12))

    # (ii) kernel directions of the twistor function
    x, y, z = heisenberg_coordinates(eps)
    directions = [("dpsi(0)_in_span_dx", nil_twistor_function(eps, 0.0), x),
                  ("dpsi(1)_in_span_dz", nil_twistor_function(eps, 1.0), z),
                  ("dpsi(inf)_in_span_dy", nil_twistor_at_infinity(eps), y)]
    for name, psi, target in directions:
        e = max(_parallel_error(_grad(psi, p, pr), _grad(target, p, pr)) for p in pts)
        checks.append(_check(name, e, tol))

    # (iii) dw annihilates the Nil Lax plane at lambda4 and w pulls back correctly
    w_nil = parse_expr(f"(1 - eps*({lam4!r})*X)*exp(-eps*(T/({lam4!r}) + Y))", parameters=pr)
    H = parse_expr("eps*X^2/2", parameters=pr)
    N0, N1 = hypercr_lax(H, pr)
    e = max(max(abs(N0.apply(w_nil, p, lam4)), abs(N1.apply(w_nil, p, lam4))) for p in pts)
    checks.append(_check("nil_lax_annihilates_w_at_lambda4", e, tol))
    xh = Const(consts["cx"]) * x
    yh = Const(consts["cy"]) * y
    w_pull = yh * expr_exp(Const(float(a)) * xh) + z * expr_exp(Const(float(b)) * xh)
    e = max(abs(eval_jet(w_pull, HYPERCR, p, 0, pr).value - eval_jet(w_nil, HYPERCR, p, 0, pr).value)
            for p in pts)
    checks.append(_check("pullback_matches_w", e, tol))

    # (iv) Hirota Lax plane at lam = Nil Lax plane at hirota_to_nil(lam)
    L0, L1 = hirota_lax(w, a, b)
    jac_exprs = [xh, yh, z]
    worst = 0.0
    for lam in (0.0, 0.5, -2.0, 3.0):
        mu = conventions.hirota_to_nil(lam, a, b)
        for p in pts[:4]:
            Jm = np.array([_grad(f, p, pr) for f in jac_exprs])
            q = [eval_jet(f, HYPERCR, p, 0, pr).value for f in jac_exprs]
            nil_pushed = (Jm @ lax_plane(N0, N1, p, mu).T).T
            A = np.vstack([lax_plane(L0, L1, q, lam), nil_pushed])
            s = np.linalg.svd(A / np.linalg.norm(A, axis=1, keepdims=True), compute_uv=False)
            worst = max(worst, float(s[2] / s[0]))
    checks.append(_check("hirota_plane_matches_nil_plane", worst, 1e-9))

    # (v) Heisenberg algebra, Killing vectors and non-invariance of the distribution
    gens = {"R_X": (Const(1.0), Const(-float(eps)) * parse_expr("T"), Const(0.0)),
            "R_Y": (Const(0.0), Const(1.0), Const(0.0)),
            "R_T": (Const(0.0), Const(0.0), Const(1.0))}
    alg = 0.0
    for p in pts[:4]:
        c_xt = vector_commutator(gens["R_X"], gens["R_T"], HYPERCR, p)
        alg = max(alg, float(np.abs(c_xt - eps * np.array([0.0, 1.0, 0.0])).max()),
                  float(np.abs(vector_commutator(gens["R_X"], gens["R_Y"], HYPERCR, p)).max()),
                  float(np.abs(vector_commutator(gens["R_T"], gens["R_Y"], HYPERCR, p)).max()))
    checks.append(_check("heisenberg_algebra", alg, 0.0))
    Wn = build_hypercr_weyl(H, pr)
    for name, V in gens.items():
        e = max(float(np.abs(lie_derivative_metric(Wn.h, V, HYPERCR, p, pr)).max()) for p in pts)
        checks.append(_check(f"killing_{name}", e, tol))
    ranks = []
    for lam in (0.7, -1.3):
        for p in pts[:3]:
            br = vector_commutator(gens["R_X"], [c for c in _eval_lam(N1, lam)], HYPERCR, p, pr)
            ranks.append(span_rank([N0.at(p, lam), N1.at(p, lam), br]))
    checks.append({"name": "distribution_not_R_X_invariant", "max_residual": float(min(ranks)),
                   "tolerance": 3.0, "pass": min(ranks) == 3})

    inv = heisenberg_invariance(eps)
    checks.extend(inv["checks"])
    return {"eps": eps, "a": a, "b": b, "lambda4": lam4, "w": f"y*exp({a!r}*x) + z*exp({b!r}*x)",
            "rescaling": consts, "lie_sign": inv["sign"], "checks": checks,
            "pass": all(c["pass"] for c in checks)}


def _eval_lam(L: LambdaVectorField, lam: float) -> tuple[Expr, ...]:
    return tuple(sum((Const(lam ** k) * L.coeffs[k][i] for k in range(len(L.coeffs))), Const(0.0))
                 for i in range(L.chart.dim))
