"""Weyl structures, their Einstein--Weyl residual, and the Jones--Tod reduction."""
from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import conventions
from .fields import Chart, Const, Expr, HIROTA, HYPERCR, JetField, eval_jet, eval_jets
from .fields.expr import as_expr, ln, partial
from .jets import DEGENERATE_TOL, DegenerateJetError, Jet, jet_matrix_inverse

#: Default "zero" for residual tensor norms computed with jets.
JET_TOL = 1e-9
#: Default "zero" for residuals of grid-sampled inputs.
GRID_TOL = 1e-4


class GeometryError(ValueError):
    pass


class DegenerateGradientError(GeometryError):
    """A gradient component required to be nonzero vanishes at the point."""


class SingularMetricError(GeometryError):
    pass


class NullKillingError(GeometryError):
    pass


@dataclass(frozen=True)
class Guard:
    """A scalar that must stay away from zero (or stay positive) on the domain."""

    expr: Expr
    label: str
    positive: bool = False

    def check(self, chart: Chart, p, params) -> None:
        v = eval_jet(self.expr, chart, p, 0, params).value
        if self.positive and not v > 0:
            raise GeometryError(f"{self.label} must be positive, got {v:.3e} at {tuple(p)}")
        if abs(v) < DEGENERATE_TOL:
            raise DegenerateGradientError(f"{self.label} = {v:.3e} at {tuple(p)}")


@dataclass(frozen=True)
class WeylStructure:
    """A metric representative ``h`` and Weyl one-form ``omega`` on a 3-chart.

    Components are :class:`Expr` trees or :class:`JetField` objects; both
    are evaluated through jets.
    """

    chart: Chart
    h: tuple[tuple, ...]
    omega: tuple
    params: Mapping[str, float] = field(default_factory=dict)
    guards: tuple[Guard, ...] = ()

    def __post_init__(self):
        if self.chart.dim != 3:
            raise GeometryError("Weyl structures live on 3-dimensional charts")
        h = tuple(tuple(row) for row in self.h)
        if any(h[i][j] is not h[j][i] and h[i][j] != h[j][i] for i in range(3) for j in range(3)):
            raise GeometryError("metric component matrix must be symmetric")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "omega", tuple(self.omega))

    def check_guards(self, p) -> None:
        for g in self.guards:
            g.check(self.chart, p, self.params)

    def metric_jets(self, p, K: int) -> list[list[Jet]]:
        flat = [self.h[i][j] for i in range(3) for j in range(i, 3)]
        js = _eval_mixed(flat, self.chart, p, K, self.params)
        out = [[None] * 3 for _ in range(3)]
        it = iter(js)
        for i in range(3):
            for j in range(i, 3):
                out[i][j] = out[j][i] = next(it)
        return out

    def omega_jets(self, p, K: int) -> list[Jet]:
        return _eval_mixed(list(self.omega), self.chart, p, K, self.params)

    def metric(self, p) -> np.ndarray:
        return np.array([[j.value for j in row] for row in self.metric_jets(p, 0)])

    def one_form(self, p) -> np.ndarray:
        return np.array([j.value for j in self.omega_jets(p, 0)])


def _eval_mixed(items, chart, p, K, params) -> list[Jet]:
    exprs = [(k, f) for k, f in enumerate(items) if not isinstance(f, JetField)]
    out: list = [None] * len(items)
    if exprs:
        for (k, _), j in zip(exprs, eval_jets([f for _, f in exprs], chart, p, K, params)):
            out[k] = j
    for k, f in enumerate(items):
        if isinstance(f, JetField):
            out[k] = f.fn(tuple(float(v) for v in p), K)
    return out


# -- builders ------------------------------------------------------------------------

def hirota_gradient_guards(w: Expr, chart: Chart = HIROTA) -> tuple[Guard, ...]:
    return tuple(Guard(w.diff(n), f"w_{n}") for n in chart.names)


def build_hirota_weyl(w: Expr, a: float, b: float, params: Mapping[str, float] | None = None
                      ) -> WeylStructure:
    """The Weyl structure attached to a function ``w(x, y, z)``.

    The metric and one-form are the closed-form conformal representative in
    which ``omega = -(w_xx/w_x) dx - (w_yy/w_y) dy - (w_zz/w_z) dz``; the
    structure is Einstein--Weyl exactly when ``w`` solves the dispersionless
    Hirota equation.
    """
    _check_ab(a, b)
    w = as_expr(w)
    wx, wy, wz = (w.diff(n) for n in "xyz")
    A, B = Const(float(a)), Const(float(b))
    d = Const(float(a - b))
    hxx = wx / (wy * wz)
    hyy = A * A * wy / (d * d * wx * wz)
    hzz = B * B * wz / (d * d * wx * wy)
    hxy = A / (d * wz)
    hxz = -B / (d * wy)
    hyz = A * B / (d * d * wx)
    h = ((hxx, hxy, hxz), (hxy, hyy, hyz), (hxz, hyz, hzz))
    omega = tuple(-partial(w, n, n) / w.diff(n) for n in "xyz")
    return WeylStructure(HIROTA, h, omega, dict(params or {}), hirota_gradient_guards(w))


def build_hypercr_weyl(H: Expr, params: Mapping[str, float] | None = None) -> WeylStructure:
    """``h = (dY + H_X dT)^2 - 4 (dX - H_Y dT) dT`` with its Weyl one-form."""
    H = as_expr(H)
    HX, HY = H.diff("X"), H.diff("Y")
    HXX, HXY = HX.diff("X"), HX.diff("Y")
    zero, one = Const(0.0), Const(1.0)
    h = ((zero, zero, Const(-2.0)),
         (zero, one, HX),
         (Const(-2.0), HX, HX * HX + 4 * HY))
    omega = (zero, HXX, HX * HXX + 2 * HXY)
    return WeylStructure(HYPERCR, h, omega, dict(params or {}))


def _check_ab(a: float, b: float) -> None:
    if a == 0 or b == 0 or a == b:
        raise GeometryError("constants a, b must be nonzero and distinct")


# -- curvature -----------------------------------------------------------------------

@dataclass(frozen=True)
class CurvatureReport:
    point: tuple[float, ...]
    chart: tuple[str, ...]
    gamma: np.ndarray  # gamma[k, i, j] = Gamma^k_ij
    ricci: np.ndarray
    scalar: float
    E: np.ndarray
    metric: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.E)))

    @property
    def trace(self) -> float:
        return float(np.einsum("ij,ij->", np.linalg.inv(self.metric), self.E))

    def to_json(self) -> str:
        iu = np.triu_indices(3)
        return json.dumps({
            "chart": list(self.chart),
            "point": list(self.point),
            "gamma": self.gamma.ravel().tolist(),
            "ricci": self.ricci[iu].tolist(),
            "scalar": self.scalar,
            "E": self.E[iu].tolist(),
        })


def _adjugate_inverse(m: np.ndarray) -> np.ndarray:
    rows = jet_matrix_inverse(m.tolist())
    return np.array(rows, dtype=float)


def curvature(W: WeylStructure, p: Sequence[float]) -> CurvatureReport:
    """Levi-Civita data of ``h`` and the trace-free Einstein--Weyl tensor.

    ``E_ij = R_ij + 1/2 nabla_(i omega_j) + 1/4 omega_i omega_j`` minus one
    third of its trace times ``h_ij``.
    """
    p = tuple(float(v) for v in p)
    W.check_guards(p)
    hj = W.metric_jets(p, 2)
    g = np.array([[hj[i][j].value for j in range(3)] for i in range(3)])
    dg = np.array([[[hj[i][j].partial(k) for j in range(3)] for i in range(3)] for k in range(3)])
    ddg = np.array([[[[hj[i][j].partial(k, l) for j in range(3)] for i in range(3)]
                     for l in range(3)] for k in range(3)])
    if abs(np.linalg.det(g)) < DEGENERATE_TOL:
        raise SingularMetricError(f"metric is singular at {p}")
    gi = _adjugate_inverse(g)

    # christoffel of the first kind, G[l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    G1 = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    gamma = np.einsum("kl,lij->kij", gi, G1)
    # derivative of gamma: dgamma[m, k, i, j] = d_m Gamma^k_ij
    dG1 = 0.5 * (np.einsum("mijl->mlij", ddg) + np.einsum("mjil->mlij", ddg) - ddg)
    dgi = -np.einsum("ka,mab,bl->mkl", gi, dg, gi)
    dgamma = np.einsum("mkl,lij->mkij", dgi, G1) + np.einsum("kl,mlij->mkij", gi, dG1)

    ricci = (np.einsum("kkij->ij", dgamma) - np.einsum("jkik->ij", dgamma)
             + np.einsum("kkl,lij->ij", gamma, gamma) - np.einsum("kjl,lik->ij", gamma, gamma))
    ricci = 0.5 * (ricci + ricci.T)
    scalar = float(np.einsum("ij,ij->", gi, ricci))

    wj = W.omega_jets(p, 1)
    om = np.array([j.value for j in wj])
    dom = np.array([[wj[j].partial(i) for j in range(3)] for i in range(3)])  # d_i omega_j
    nabla = dom - np.einsum("kij,k->ij", gamma, om)
    sym = 0.5 * (nabla + nabla.T)
    S = ricci + 0.5 * sym + 0.25 * np.outer(om, om)
    E = S - np.einsum("ij,ij->", gi, S) / 3.0 * g
    return CurvatureReport(p, W.chart.names, gamma, ricci, scalar, E, g)


# -- gauge and reduction -------------------------------------------------------------

def conformal_rescale(W: WeylStructure, phi: Expr | float | None = None, *,
                      phi_squared: Expr | float | None = None) -> WeylStructure:
    """``(phi^2 h, omega + 2 d ln phi)``; pass either ``phi`` or ``phi_squared``."""
    if (phi is None) == (phi_squared is None):
        raise GeometryError("give exactly one of phi, phi_squared")
    if phi is not None:
        phi = as_expr(phi)
        factor = phi * phi
        positive = phi
        log_factor = 2 * ln(phi)
    else:
        factor = as_expr(phi_squared)
        positive = factor
        log_factor = ln(factor)
    guard = Guard(positive, "conformal factor", positive=True)
    dlog = tuple(log_factor.diff(n) for n in W.chart.names)

    if all(not isinstance(c, JetField) for row in W.h for c in row) and \
            all(not isinstance(c, JetField) for c in W.omega):
        h = tuple(tuple(factor * c for c in row) for row in W.h)
        om = tuple(o + d for o, d in zip(W.omega, dlog))
        return WeylStructure(W.chart, h, om, W.params, W.guards + (guard,))

    chart, params = W.chart, W.params

    def hij(i, j):
        return JetField(lambda p, K: eval_jet(factor, chart, p, K, params)
                        * W.metric_jets(p, K)[i][j], f"phi^2 h[{i}{j}]")

    def oi(i):
        return JetField(lambda p, K: W.omega_jets(p, K)[i]
                        + eval_jet(dlog[i], chart, p, K, params), f"omega[{i}] + 2 dln phi")

    h = tuple(tuple(hij(i, j) for j in range(3)) for i in range(3))
    h = tuple(tuple(h[min(i, j)][max(i, j)] for j in range(3)) for i in range(3))
    return WeylStructure(W.chart, h, tuple(oi(i) for i in range(3)), W.params,
                         W.guards + (guard,))


@dataclass(frozen=True)
class KillingExtension:
    """Four vector fields on ``base x R_tau`` defining a neutral 4-metric.

    The contravariant metric is ``W1 (.) W4 - W2 (.) W3``; the Killing field
    is the coordinate field along ``chart4.names[killing_axis]``.
    """

    chart4: Chart
    W: tuple[tuple[Expr, ...], ...]
    params: Mapping[str, float] = field(default_factory=dict)
    killing_axis: int = 3

    def __post_init__(self):
        if self.chart4.dim != 4 or len(self.W) != 4 or any(len(v) != 4 for v in self.W):
            raise GeometryError("a Killing extension needs four 4-component vector fields")

    @property
    def base_chart(self) -> Chart:
        return Chart(tuple(n for i, n in enumerate(self.chart4.names) if i != self.killing_axis))


def hirota_extension(w: Expr, a: float, b: float, params=None) -> KillingExtension:
    """Lax pair of ``w`` extended by ``d_tau``: ``L0 + d_tau = W1 - lam W2``, ``L1 = W3 - lam W4``."""
    _check_ab(a, b)
    w = as_expr(w)
    wx, wy, wz = (w.diff(n) for n in "xyz")
    z0, one = Const(0.0), Const(1.0)
    W1 = (-wz / wx, z0, one, one)
    W2 = (z0, z0, Const(-float(a)), z0)
    W3 = (-wy / wx, one, z0, z0)
    W4 = (z0, Const(-float(b)), z0, z0)
    return KillingExtension(Chart(("x", "y", "z", "tau")), (W1, W2, W3, W4), dict(params or {}))


def _eps4():
    eps = np.zeros((4, 4, 4, 4))
    for perm in itertools.permutations(range(4)):
        inv = sum(1 for i in range(4) for j in range(i + 1, 4) if perm[i] > perm[j])
        eps[perm] = -1.0 if inv % 2 else 1.0
    return eps


_EPS4 = _eps4()


def _frame_jets(ext: KillingExtension, p4, K: int) -> list[list[Jet]]:
    comps = [c for vec in ext.W for c in vec]
    js = eval_jets(comps, ext.chart4, p4, K, ext.params)
    return [js[4 * k: 4 * k + 4] for k in range(4)]


def _contravariant_metric(ext: KillingExtension, p4, K: int) -> list[list[Jet]]:
    W = _frame_jets(ext, p4, K)
    s = conventions.SYMMETRIC_PRODUCT_WEIGHT
    return [[s * (W[0][i] * W[3][j] + W[3][i] * W[0][j] - W[1][i] * W[2][j] - W[2][i] * W[1][j])
             for j in range(4)] for i in range(4)]


def jones_tod_reduce(ext: KillingExtension, tau0: float = 0.0) -> WeylStructure:
    """Einstein--Weyl structure on the space of orbits of the Killing field.

    ``h = |K|^-2 g - |K|^-4 K (x) K`` restricted to the base and
    ``omega = 2 |K|^-2 *(K ^ dK)``, returned as jet fields.
    """
    kax = ext.killing_axis
    base = [i for i in range(4) if i != kax]
    orient = float(conventions.HODGE_ORIENTATION)

    @functools.lru_cache(maxsize=64)
    def reduce_at(p: tuple, K: int):
        p4 = list(p)
        p4.insert(kax, tau0)
        gi4 = _contravariant_metric(ext, p4, K + 1)
        frame = np.array([[e.value for e in vec]
                          for vec in _frame_jets(ext, p4, 0)])
        frame_sign = np.sign(np.linalg.det(frame))
        if frame_sign == 0:
            raise SingularMetricError(f"null frame is degenerate at {p}")
        for row in gi4:
            for e in row:
                if e.order >= 1 and abs(e.partial(kax)) > 1e-12 * max(1.0, abs(e.value)):
                    raise GeometryError("vector fields depend on the Killing coordinate")
        # tau-independent: work with jets on the base only
        gi = [[e.restrict(base) for e in row] for row in gi4]
        det_gi = _det_value(gi)
        if abs(det_gi) < DEGENERATE_TOL:
            raise SingularMetricError(f"contravariant metric is singular at {p}")
        g = jet_matrix_inverse(gi)
        Kf = [g[a][kax] for a in range(4)]
        K2 = Kf[kax]
        if abs(K2.value) < DEGENERATE_TOL:
            raise NullKillingError(f"Killing vector is null at {p}")
        Kt = [k.truncate(K) for k in Kf]
        K2t = K2.truncate(K)
        h = [[(g[a][b].truncate(K) / K2t) - Kt[a] * Kt[b] / (K2t * K2t) for b in base] for a in base]

        def d(a, f):  # d/dx^a on base jets, zero along the Killing axis
            return None if a == kax else f.diff(base.index(a))

        dK = [[None] * 4 for _ in range(4)]
        for a in range(4):
            for b in range(4):
                t1 = d(a, Kf[b])
                t2 = d(b, Kf[a])
                val = Jet.constant(0.0, 3, K, p)
                if t1 is not None:
                    val = val + t1
                if t2 is not None:
                    val = val - t2
                dK[a][b] = val
        # dual vector density dens^s = (1/3!) eps^{pqrs} (K ^ dK)_{pqr}
        dens = []
        for s_ in range(4):
            acc = Jet.constant(0.0, 3, K, p)
            for (pp, q, r) in itertools.combinations([i for i in range(4) if i != s_], 3):
                e = _EPS4[pp, q, r, s_]
                A = Kt[pp] * dK[q][r] + Kt[q] * dK[r][pp] + Kt[r] * dK[pp][q]
                acc = acc + e * A
            dens.append(acc)
        # (*A)_d = orient * sgn(det g) / sqrt|det g| * g_ds dens^s
        det_g = 1.0 / _det_jet(gi).truncate(K)
        sgn = 1.0 if det_g.value > 0 else -1.0
        inv_sqrt = 1.0 / (sgn * det_g).sqrt()
        star = [orient * frame_sign * sgn * inv_sqrt * sum((g[dd][s_].truncate(K) * dens[s_] for s_ in range(4)),
                                               Jet.constant(0.0, 3, K, p)) for dd in range(4)]
        omega = [2.0 * star[a] / K2t for a in base]
        return h, omega

    chart = ext.base_chart

    def hcomp(i, j):
        return JetField(lambda p, K: reduce_at(tuple(p), K)[0][i][j], f"JT h[{i}{j}]")

    def ocomp(i):
        return JetField(lambda p, K: reduce_at(tuple(p), K)[1][i], f"JT omega[{i}]")

    hm = [[hcomp(i, j) for j in range(3)] for i in range(3)]
    h = tuple(tuple(hm[min(i, j)][max(i, j)] for j in range(3)) for i in range(3))
    return WeylStructure(chart, h, tuple(ocomp(i) for i in range(3)), ext.params)


def _det_jet(m):
    from .jets import det_adj
    return det_adj(m)


def _det_value(m) -> float:
    return float(np.linalg.det(np.array([[e.value for e in row] for row in m])))


def hirota_gauge(W: WeylStructure, w: Expr) -> WeylStructure:
    """Move a reduced Hirota structure into the gauge of :func:`build_hirota_weyl`.

    Applies ``phi^2 = w_z/(w_x w_y)`` followed by the constant normalisation
    recorded in the conventions file.
    """
    w = as_expr(w)
    phi2 = w.diff("z") / (w.diff("x") * w.diff("y"))
    R = conformal_rescale(W, phi_squared=phi2)
    c = conventions.JONES_TOD_METRIC_FACTOR
    hm = [[JetField(lambda p, K, f=R.h[i][j]: c * eval_jet(f, W.chart, p, K, W.params), "scaled")
           for j in range(3)] for i in range(3)]
    h = tuple(tuple(hm[min(i, j)][max(i, j)] for j in range(3)) for i in range(3))
    return WeylStructure(R.chart, h, R.omega, R.params, R.guards)


def lie_derivative_metric(h_fields, V_fields, chart: Chart, p, params=None) -> np.ndarray:
    """``(L_V h)_ij = V^k d_k h_ij + h_kj d_i V^k + h_ik d_j V^k`` at ``p``."""
    n = chart.dim
    hj = eval_jets([h_fields[i][j] for i in range(n) for j in range(n)], chart, p, 1, params)
    vj = eval_jets(list(V_fields), chart, p, 1, params)
    h = np.array([j.value for j in hj]).reshape(n, n)
    dh = np.array([j.gradient() for j in hj]).reshape(n, n, n)  # dh[i, j, k] = d_k h_ij
    V = np.array([j.value for j in vj])
    dV = np.array([j.gradient() for j in vj])  # dV[k, i] = d_i V^k
    return np.einsum("k,ijk->ij", V, dh) + np.einsum("kj,ki->ij", h, dV) + np.einsum("ik,kj->ij", h, dV)
