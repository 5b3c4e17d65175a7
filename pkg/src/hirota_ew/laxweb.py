"""Lax pairs, their commutators, PDE residuals and the Veronese web."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .fields import Chart, Const, Expr, HIROTA, HYPERCR, eval_jets
from .fields.expr import as_expr, partial
from .geometry import DegenerateGradientError, GeometryError, _check_ab
from .jets import DEGENERATE_TOL, Jet


@dataclass(frozen=True)
class LambdaVectorField:
    """``sum_k lam^k coeffs[k]``, each coefficient a vector field of expressions."""

    chart: Chart
    coeffs: tuple[tuple[Expr, ...], ...]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        coeffs = tuple(tuple(as_expr(c) for c in v) for v in self.coeffs)
        if any(len(v) != self.chart.dim for v in coeffs):
            raise ValueError("vector components must match the chart dimension")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def jets(self, p, K: int) -> list[list[Jet]]:
        flat = [c for v in self.coeffs for c in v]
        js = eval_jets(flat, self.chart, p, K, self.params)
        n = self.chart.dim
        return [js[k * n:(k + 1) * n] for k in range(len(self.coeffs))]

    def coefficients_at(self, p) -> np.ndarray:
        """Array ``(degree + 1, dim)`` of coefficient vectors at ``p``."""
        return np.array([[j.value for j in v] for v in self.jets(p, 0)])

    def at(self, p, lam: float) -> np.ndarray:
        c = self.coefficients_at(p)
        return sum(lam ** k * c[k] for k in range(len(c)))

    def apply(self, f: Expr, p, lam: float) -> float:
        """Directional derivative ``L(lam) f`` at ``p``."""
        fj = eval_jets([f], self.chart, p, 1, self.params)[0]
        return float(self.at(p, lam) @ fj.gradient())


def vector_field(chart: Chart, comps, params=None) -> LambdaVectorField:
    """A lambda-independent vector field as a degree-0 :class:`LambdaVectorField`."""
    return LambdaVectorField(chart, (tuple(comps),), dict(params or {}))


def commutator(L: LambdaVectorField, M: LambdaVectorField, p: Sequence[float]) -> np.ndarray:
    """``[L, M]`` at ``p`` as an array of lambda-coefficients, shape ``(dL + dM + 1, dim)``.

    Lambda stays a formal variable: coefficient ``k`` collects
    ``sum_{i + j = k} [L_i, M_j]``.
    """
    if L.chart != M.chart:
        raise ValueError("vector fields live on different charts")
    params = {**L.params, **M.params}
    n = L.chart.dim
    flat = [c for v in L.coeffs + M.coeffs for c in v]
    js = eval_jets(flat, L.chart, p, 1, params)
    Lj = [js[k * n:(k + 1) * n] for k in range(len(L.coeffs))]
    off = len(L.coeffs) * n
    Mj = [js[off + k * n: off + (k + 1) * n] for k in range(len(M.coeffs))]
    out = np.zeros((len(L.coeffs) + len(M.coeffs) - 1, n))
    for i, A in enumerate(Lj):
        Av = np.array([a.value for a in A])
        dA = np.array([a.gradient() for a in A])
        for j, B in enumerate(Mj):
            Bv = np.array([b.value for b in B])
            dB = np.array([b.gradient() for b in B])
            out[i + j] += dB @ Av - dA @ Bv
    return out


# -- Lax pairs -----------------------------------------------------------------------

def hirota_lax(w: Expr, a: float, b: float, params=None) -> tuple[LambdaVectorField, LambdaVectorField]:
    """``L0 = d_z - (w_z/w_x) d_x + lam a d_z``, ``L1 = d_y - (w_y/w_x) d_x + lam b d_y``."""
    _check_ab(a, b)
    w = as_expr(w)
    wx, wy, wz = (w.diff(n) for n in "xyz")
    if wx.is_const(0.0):
        raise DegenerateGradientError("w_x vanishes identically")
    z0, one = Const(0.0), Const(1.0)
    L0 = LambdaVectorField(HIROTA, ((-wz / wx, z0, one), (z0, z0, Const(float(a)))), dict(params or {}))
    L1 = LambdaVectorField(HIROTA, ((-wy / wx, one, z0), (z0, Const(float(b)), z0)), dict(params or {}))
    return L0, L1


def hypercr_lax(H: Expr, params=None) -> tuple[LambdaVectorField, LambdaVectorField]:
    """``L0 = d_Y - lam (d_T + H_Y d_X)``, ``L1 = d_X - lam (d_Y + H_X d_X)`` on (X, Y, T)."""
    H = as_expr(H)
    z0, one = Const(0.0), Const(1.0)
    L0 = LambdaVectorField(HYPERCR, ((z0, one, z0), (-H.diff("Y"), z0, Const(-1.0))), dict(params or {}))
    L1 = LambdaVectorField(HYPERCR, ((one, z0, z0), (-H.diff("X"), Const(-1.0), z0)), dict(params or {}))
    return L0, L1


# -- residuals -----------------------------------------------------------------------

def _first_second(f: Expr, chart: Chart, p, params):
    j = eval_jets([f], chart, p, 2, params)[0]
    return j


def hirota_residual(w: Expr, a: float, b: float, p, params=None) -> float:
    """``(b - a) w_x w_yz + a w_y w_zx - b w_z w_xy`` at ``p``."""
    j = _first_second(as_expr(w), HIROTA, p, params)
    wx, wy, wz = j.partial(0), j.partial(1), j.partial(2)
    return (b - a) * wx * j.partial(1, 2) + a * wy * j.partial(2, 0) - b * wz * j.partial(0, 1)


def hypercr_residual(H: Expr, p, params=None) -> float:
    """``H_XT - H_YY + H_Y H_XX - H_X H_XY`` at ``p`` on (X, Y, T)."""
    j = _first_second(as_expr(H), HYPERCR, p, params)
    return hypercr_residual_from_jet(j)


def hypercr_residual_from_jet(j: Jet) -> float:
    """Residual from any jet of order >= 2 in (X, Y, T) order."""
    return (j.partial(0, 2) - j.partial(1, 1) + j.partial(1) * j.partial(0, 0)
            - j.partial(0) * j.partial(0, 1))


@dataclass(frozen=True)
class HierarchySpec:
    """Distinct nonzero constants ``a_0 .. a_{n-1}`` on the chart ``(x, x0, .., x_{n-1})``."""

    constants: tuple[float, ...]

    def __post_init__(self):
        c = tuple(float(v) for v in self.constants)
        object.__setattr__(self, "constants", c)
        if not 1 <= len(c) <= 8:
            raise ValueError("hierarchies are supported for 1 <= n <= 8 times")
        if any(v == 0 for v in c) or len(set(c)) != len(c):
            raise ValueError("hierarchy constants must be distinct and nonzero")

    @property
    def chart(self) -> Chart:
        return Chart(("x",) + tuple(f"x{i}" for i in range(len(self.constants))))


def hierarchy_lax(w: Expr, spec: HierarchySpec, params=None) -> list[LambdaVectorField]:
    """``L_i = d_i - (d_i w / d_x w) d_x + lam a_i d_i`` for every time ``x_i``."""
    w = as_expr(w)
    chart = spec.chart
    n = chart.dim
    wx = w.diff("x")
    out = []
    for i, ai in enumerate(spec.constants):
        c0 = [Const(0.0)] * n
        c1 = [Const(0.0)] * n
        c0[0] = -w.diff(f"x{i}") / wx
        c0[i + 1] = Const(1.0)
        c1[i + 1] = Const(ai)
        out.append(LambdaVectorField(chart, (tuple(c0), tuple(c1)), dict(params or {})))
    return out


def hierarchy_residual(w: Expr, spec: HierarchySpec, i: int, j: int, p, params=None) -> float:
    """``(a_i - a_j) w_x w_ij + a_j w_i w_jx - a_i w_j w_ix`` at ``p`` (no summation)."""
    if i == j:
        raise ValueError("hierarchy residual needs two distinct times")
    jt = _first_second(as_expr(w), spec.chart, p, params)
    ai, aj = spec.constants[i], spec.constants[j]
    I, J = i + 1, j + 1
    return ((ai - aj) * jt.partial(0) * jt.partial(I, J) + aj * jt.partial(I) * jt.partial(J, 0)
            - ai * jt.partial(J) * jt.partial(I, 0))


# -- Veronese web -------------------------------------------------------------------

@dataclass(frozen=True)
class VeroneseTriple:
    V1: tuple[Expr, ...]
    V2: tuple[Expr, ...]
    V3: tuple[Expr, ...]
    guards: tuple[Expr, ...] = ()
    params: Mapping[str, float] = field(default_factory=dict)

    def vectors_at(self, p) -> np.ndarray:
        vals = eval_jets(list(self.guards) + list(self.V1 + self.V2 + self.V3), HIROTA, p, 0,
                         self.params)
        g, v = vals[:len(self.guards)], vals[len(self.guards):]
        for gj in g:
            if abs(gj.value) < DEGENERATE_TOL:
                raise DegenerateGradientError(f"degenerate gradient at {tuple(p)}")
        return np.array([j.value for j in v]).reshape(3, 3)


def veronese_fields(w: Expr, a: float, b: float, params=None) -> VeroneseTriple:
    _check_ab(a, b)
    w = as_expr(w)
    wx, wy, wz = (w.diff(n) for n in "xyz")
    A, B = Const(float(a)), Const(float(b))
    z0 = Const(0.0)
    ab = A * B
    V1 = (z0, -ab * B * wz, ab * A * wy)
    V2 = (z0, -ab * wz, ab * wy)
    V3 = (Const(float(a - b)) * wy * wz / wx, -A * wz, B * wy)
    return VeroneseTriple(V1, V2, V3, (wx, wy, wz), dict(params or {}))


def veronese_eval(vt: VeroneseTriple, lam: float, p) -> np.ndarray:
    """``V(lam) = V1 - 2 lam V2 + lam^2 V3`` at ``p``."""
    V = vt.vectors_at(p)
    return V[0] - 2 * lam * V[1] + lam ** 2 * V[2]


def veronese_plane(vt: VeroneseTriple, mu: float, p) -> np.ndarray:
    """Rows ``V1 - mu V2`` and ``V2 - mu V3``."""
    V = vt.vectors_at(p)
    return np.array([V[0] - mu * V[1], V[1] - mu * V[2]])


def span_rank(vectors: Sequence[np.ndarray], rtol: float = 1e-9) -> int:
    """Numerical rank of the stacked vectors (relative singular value cut)."""
    M = np.atleast_2d(np.asarray(vectors, dtype=float))
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def span_compare(pair_a: Sequence[np.ndarray], pair_b: Sequence[np.ndarray], rtol: float = 1e-9) -> int:
    """Rank of the joint span of two vector pairs; 2 means the same plane."""
    return span_rank(list(pair_a) + list(pair_b), rtol)


def plane_distance(pair_a, pair_b) -> float:
    """Sine of the largest principal angle between two planes."""
    qa, _ = np.linalg.qr(np.asarray(pair_a, dtype=float).T)
    qb, _ = np.linalg.qr(np.asarray(pair_b, dtype=float).T)
    # sines directly from the residual of projecting B onto A; 1 - cos^2 loses half the digits
    r = qb - qa @ (qa.T @ qb)
    return float(np.linalg.norm(r, 2))


def lax_plane(L0: LambdaVectorField, L1: LambdaVectorField, p, lam: float) -> np.ndarray:
    return np.array([L0.at(p, lam), L1.at(p, lam)])


# -- sweeps --------------------------------------------------------------------------

def residual_sweep(L0: LambdaVectorField, L1: LambdaVectorField, points, lambdas) -> list[dict]:
    """``|[L0, L1](lam)|`` at every point and lambda, one row each."""
    names = L0.chart.names
    rows = []
    for p in points:
        C = commutator(L0, L1, p)
        for lam in lambdas:
            r = float(np.linalg.norm(sum(lam ** k * C[k] for k in range(len(C)))))
            rows.append({**dict(zip(names, map(float, p))), "lambda": float(lam), "residual": r})
    return rows


def write_residual_csv(rows: list[dict], path, names: Sequence[str] = HIROTA.names) -> None:
    """CSV with columns ``<coordinates>,lambda,residual``."""
    import csv
    keys = list(names) + ["lambda", "residual"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(keys)
        for r in rows:
            wr.writerow([f"{float(r[k]):.17g}" for k in keys])
