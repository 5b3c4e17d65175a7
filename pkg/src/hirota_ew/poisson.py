"""Five-dimensional Poisson pencils built from Lax pairs.

Bivectors are stored as antisymmetric 5x5 matrices of expressions on a chart
``(base^3, p0, p1)``; ``A ^ B`` has components ``A^a B^b - B^a A^b``.
"""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import conventions
from .fields import Chart, Const, Expr, eval_jets
from .fields.expr import as_expr
from .laxweb import LambdaVectorField, hypercr_lax
from .fields import parse_expr

FIBRE = ("p0", "p1")


class PoissonError(ValueError):
    pass


def _eps(n: int) -> dict:
    out = {}
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        out[perm] = -1.0 if inv % 2 else 1.0
    return out


_EPS5 = _eps(5)


@dataclass(frozen=True)
class Bivector5:
    chart: Chart
    entries: tuple[tuple[Expr, ...], ...]
    params: dict

    def __post_init__(self):
        if self.chart.dim != 5:
            raise PoissonError("bivectors live on 5-dimensional charts")
        E = tuple(tuple(as_expr(c) for c in row) for row in self.entries)
        if len(E) != 5 or any(len(r) != 5 for r in E):
            raise PoissonError("bivector needs a 5x5 component matrix")
        for i in range(5):
            if not E[i][i].is_const(0.0):
                raise PoissonError("bivector diagonal must vanish")
        # the upper triangle is authoritative; the lower one is its negative
        E = tuple(tuple(E[i][j] if i <= j else -E[j][i] for j in range(5)) for i in range(5))
        object.__setattr__(self, "entries", E)

    def jets(self, p, K: int):
        flat = [self.entries[i][j] for i in range(5) for j in range(i + 1, 5)]
        js = iter(eval_jets(flat, self.chart, p, K, self.params))
        out = [[None] * 5 for _ in range(5)]
        for i in range(5):
            for j in range(i + 1, 5):
                out[i][j] = next(js)
        return out

    def at(self, p) -> np.ndarray:
        return _assemble(self.jets(p, 0), lambda j: j.value)

    def derivatives(self, p) -> np.ndarray:
        """``dP[a, b, c] = d_c P^{ab}``."""
        js = self.jets(p, 1)
        out = np.zeros((5, 5, 5))
        for i in range(5):
            for j in range(i + 1, 5):
                g = js[i][j].gradient()
                out[i, j] = g
                out[j, i] = -g
        return out


def _assemble(upper, f) -> np.ndarray:
    M = np.zeros((5, 5))
    for i in range(5):
        for j in range(i + 1, 5):
            M[i, j] = f(upper[i][j])
            M[j, i] = -M[i, j]
    return M


def wedge(A: Sequence[Expr], B: Sequence[Expr]) -> tuple[tuple[Expr, ...], ...]:
    n = len(A)
    up = {(i, j): as_expr(A[i]) * B[j] - as_expr(B[i]) * A[j]
          for i in range(n) for j in range(i + 1, n)}
    return tuple(tuple(up[i, j] if i < j else (-up[j, i] if i > j else Const(0.0))
                       for j in range(n)) for i in range(n))


@dataclass(frozen=True)
class PoissonPencil:
    """``P(lam) = P0 + lam P1``."""

    P0: Bivector5
    P1: Bivector5

    @property
    def chart(self) -> Chart:
        return self.P0.chart

    def at(self, p, lam: float) -> np.ndarray:
        return self.P0.at(p) + lam * self.P1.at(p)

    def derivatives(self, p, lam: float) -> np.ndarray:
        return self.P0.derivatives(p) + lam * self.P1.derivatives(p)

    def bivector(self, lam: float) -> Bivector5:
        E = tuple(tuple(a + Const(float(lam)) * b for a, b in zip(r0, r1))
                  for r0, r1 in zip(self.P0.entries, self.P1.entries))
        return Bivector5(self.chart, E, self.P0.params)


def pencil_from_lax(L0: LambdaVectorField, L1: LambdaVectorField,
                    fibre: tuple[str, str] = FIBRE) -> PoissonPencil:
    """``P(lam) = L0(lam) ^ d_p0 + L1(lam) ^ d_p1``."""
    if L0.degree > 1 or L1.degree > 1:
        raise PoissonError("pencils need Lax fields of degree <= 1 in lambda")
    if L0.chart != L1.chart:
        raise PoissonError("Lax fields live on different charts")
    chart = Chart(L0.chart.names + tuple(fibre))
    z = Const(0.0)
    e0 = (z, z, z, Const(1.0), z)
    e1 = (z, z, z, z, Const(1.0))
    params = {**L0.params, **L1.params}

    def coeff(L, k):
        v = L.coeffs[k] if k < len(L.coeffs) else (z, z, z)
        return tuple(v) + (z, z)

    mats = []
    for k in range(2):
        A = wedge(coeff(L0, k), e0)
        B = wedge(coeff(L1, k), e1)
        mats.append(Bivector5(chart, tuple(tuple(a + b for a, b in zip(ra, rb))
                                           for ra, rb in zip(A, B)), params))
    return PoissonPencil(*mats)


# -- Jacobi identity -----------------------------------------------------------------

def jacobiator_from_arrays(P: np.ndarray, dP: np.ndarray) -> np.ndarray:
    """``J^{abc} = sum_d P^{ad} d_d P^{bc} + cyclic(a, b, c)``."""
    T = np.einsum("ad,bcd->abc", P, dP)
    return T + np.transpose(T, (2, 0, 1)) + np.transpose(T, (1, 2, 0))


def jacobiator(P: Bivector5 | PoissonPencil, p, lam: float = 0.0) -> np.ndarray:
    """Full totally antisymmetric trivector ``J`` at ``p`` (shape 5x5x5)."""
    if isinstance(P, PoissonPencil):
        return jacobiator_from_arrays(P.at(p, lam), P.derivatives(p, lam))
    return jacobiator_from_arrays(P.at(p), P.derivatives(p))


def jacobiator_components(J: np.ndarray, names: Sequence[str]) -> dict[str, float]:
    """The ten independent components keyed ``"a,b,c"`` with ``a < b < c``."""
    return {",".join(names[i] for i in idx): float(J[idx])
            for idx in itertools.combinations(range(5), 3)}


def jacobiator_sweep(pencil: PoissonPencil, points, lambdas) -> list[dict]:
    rows = []
    for lam in lambdas:
        for p in points:
            J = jacobiator(pencil, p, lam)
            rows.append({"lambda": float(lam), **{n: float(v) for n, v in
                                                  zip(pencil.chart.names[:3], p[:3])},
                         "maxJ": float(np.abs(J).max())})
    return rows


def write_jacobiator_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        keys = list(rows[0])
        wr = csv.writer(fh)
        wr.writerow(keys)
        for r in rows:
            wr.writerow([repr(r[k]) for k in keys])


# -- Casimirs and Hamiltonian flows --------------------------------------------------

def _gradient(f: Expr, chart: Chart, p, params) -> np.ndarray:
    return eval_jets([as_expr(f)], chart, p, 1, params)[0].gradient()


def casimir_check(P: PoissonPencil, C: Expr, p, lam: float) -> np.ndarray:
    """``P(lam)(dC, .)``, i.e. the Hamiltonian vector field of ``C``; zero iff Casimir."""
    C = as_expr(C)
    if set(FIBRE) & C.symbols():
        raise PoissonError("Casimir candidates must not depend on the fibre coordinates")
    return P.at(p, lam) @ _gradient(C, P.chart, p, P.P0.params)


def poisson_bracket(P: PoissonPencil, f: Expr, g: Expr, p, lam: float) -> float:
    """``{f, g} = P^{ab} d_a f d_b g``."""
    params = P.P0.params
    return float(_gradient(f, P.chart, p, params) @ P.at(p, lam) @ _gradient(g, P.chart, p, params))


def hamiltonian_vector(P: PoissonPencil, f: Expr, p, lam: float) -> np.ndarray:
    """``X_f^a = P^{ab} d_b f``."""
    return P.at(p, lam) @ _gradient(f, P.chart, p, P.P0.params)


def hamiltonian_flow(P: PoissonPencil, f: Expr, p, lam: float, t: float,
                     steps: int = 16) -> np.ndarray:
    """Point reached after time ``t`` along ``X_f`` (classical RK4, fixed steps)."""
    if steps < 1:
        raise PoissonError("steps must be positive")
    f = as_expr(f)
    if set(FIBRE) & f.symbols():
        raise PoissonError("Hamiltonians must be functions on the base")
    x = np.asarray(p, dtype=float).copy()
    dt = t / steps

    def rhs(q):
        return hamiltonian_vector(P, f, q, lam)

    for _ in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


# -- e(lambda) one-forms -------------------------------------------------------------

@dataclass(frozen=True)
class EFormTriple:
    """``e(lam) = e3 + lam e2 + lam^2 e1`` with ``e(lam) = (P(lam) ^ P(lam)) -| Omega``."""

    chart: Chart
    e1: tuple[Expr, ...]
    e2: tuple[Expr, ...]
    e3: tuple[Expr, ...]
    omega: float
    params: dict

    def forms(self) -> tuple[tuple[Expr, ...], ...]:
        return self.e1, self.e2, self.e3

    def at(self, p, lam: float) -> np.ndarray:
        js = eval_jets(list(self.e1 + self.e2 + self.e3), self.chart, p, 0, self.params)
        v = np.array([j.value for j in js]).reshape(3, 5)
        return v[2] + lam * v[1] + lam ** 2 * v[0]

    def jets(self, p, lam: float, K: int):
        js = eval_jets(list(self.e1 + self.e2 + self.e3), self.chart, p, K, self.params)
        return [js[10 + m] + lam * js[5 + m] + lam ** 2 * js[m] for m in range(5)]


def contract_volume(P: Sequence[Sequence[Expr]], omega: float = 1.0) -> tuple[Expr, ...]:
    """``e_m = (omega / 8) eps_{abcdm} P^{ab} P^{cd}`` (signed sub-Pfaffians)."""
    out = []
    for m in range(5):
        rest = [i for i in range(5) if i != m]
        acc: Expr = Const(0.0)
        # Pf of the 4x4 block on ``rest`` times the sign of moving m to the end
        a, b, c, d = rest
        pf = P[a][b] * P[c][d] - P[a][c] * P[b][d] + P[a][d] * P[b][c]
        acc = Const(omega * _EPS5[(a, b, c, d, m)]) * pf
        out.append(acc)
    return tuple(out)


def eform(P: PoissonPencil, omega: float = 1.0) -> EFormTriple:
    """Sample ``(P ^ P) -| Omega`` at lam in {0, 1, -1} and solve for ``e1, e2, e3``."""
    if omega == 0:
        raise PoissonError("the volume coefficient must be nonzero")
    lams = (0.0, 1.0, -1.0)
    samples = [contract_volume(P.bivector(l).entries, omega) for l in lams]
    # rows: e(lam) = e3 + lam e2 + lam^2 e1
    V = np.array([[l ** 2, l, 1.0] for l in lams])
    Vinv = np.linalg.inv(V)
    coeffs = []
    for k in range(3):
        comp = []
        for m in range(5):
            acc: Expr = Const(0.0)
            for s in range(3):
                c = float(Vinv[k, s])
                if c != 0.0:
                    acc = acc + Const(c) * samples[s][m]
            comp.append(acc)
        coeffs.append(tuple(comp))
    return EFormTriple(P.chart, coeffs[0], coeffs[1], coeffs[2], float(omega), P.P0.params)


def e_wedge_de(ef: EFormTriple, p, lam: float) -> float:
    """Largest component of the 3-form ``e ^ de`` at ``(p, lam)``."""
    js = ef.jets(p, lam, 1)
    e = np.array([j.value for j in js])
    D = np.array([j.gradient() for j in js])  # D[b, a] = d_a e_b
    de = D.T - D  # de[a, b] = d_a e_b - d_b e_a
    T = (np.einsum("a,bc->abc", e, de) + np.einsum("b,ca->abc", e, de)
         + np.einsum("c,ab->abc", e, de))
    return float(np.abs(T).max())


def conformal_from_eforms(ef: EFormTriple) -> tuple[tuple[Expr, ...], ...]:
    """``h = e2 (x) e2 - 2 (e1 (x) e3 + e3 (x) e1)`` on the base (3x3)."""
    e1, e2, e3 = ef.e1, ef.e2, ef.e3
    return tuple(tuple(e2[i] * e2[j] - 2.0 * (e1[i] * e3[j] + e3[i] * e1[j]) for j in range(3))
                 for i in range(3))


def conformal_at(ef: EFormTriple, p) -> np.ndarray:
    js = eval_jets(list(ef.e1 + ef.e2 + ef.e3), ef.chart, p, 0, ef.params)
    e1, e2, e3 = (np.array([j.value for j in js[5 * k: 5 * k + 3]]) for k in range(3))
    return np.outer(e2, e2) - 2.0 * (np.outer(e1, e3) + np.outer(e3, e1))


def ratio_spread(A: np.ndarray, B: np.ndarray, floor: float = 1e-12) -> float:
    """Spread ``max - min`` of ``A_ij / B_ij`` over entries with ``|B_ij| > floor``,
    relative to the mean ratio; 0 when ``A`` is a multiple of ``B``.

    Entries where ``B`` vanishes must vanish in ``A`` too (else ``inf``).
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    mask = np.abs(B) > floor
    if np.any(np.abs(A[~mask]) > floor * max(1.0, np.abs(A).max())):
        return float("inf")
    r = A[mask] / B[mask]
    return float((r.max() - r.min()) / abs(r.mean()))


# -- Lie derivatives and the Heisenberg pencil ---------------------------------------

def lie_derivative_bivector(P: Bivector5, V: Sequence[Expr], p) -> np.ndarray:
    """``(L_V P)^{ab} = V^c d_c P^{ab} - P^{cb} d_c V^a - P^{ac} d_c V^b``."""
    js = eval_jets([as_expr(v) for v in V], P.chart, p, 1, P.params)
    Vv = np.array([j.value for j in js])
    dV = np.array([j.gradient() for j in js])  # dV[a, c] = d_c V^a
    Pm = P.at(p)
    dP = P.derivatives(p)
    return dP @ Vv - (dV @ Pm) - (Pm @ dV.T)


def vector_commutator(U: Sequence[Expr], V: Sequence[Expr], chart: Chart, p, params=None) -> np.ndarray:
    """``[U, V]^a = U^c d_c V^a - V^c d_c U^a`` at ``p``."""
    n = chart.dim
    js = eval_jets([as_expr(c) for c in list(U) + list(V)], chart, p, 1, params)
    Uv = np.array([j.value for j in js[:n]])
    Vv = np.array([j.value for j in js[n:]])
    dU = np.array([j.gradient() for j in js[:n]])
    dV = np.array([j.gradient() for j in js[n:]])
    return dV @ Uv - dU @ Vv


def heisenberg_generators(eps: float) -> dict[str, tuple[Expr, ...]]:
    """Right-invariant fields ``R_X = d_X - eps T d_Y``, ``R_Y``, ``R_T`` on (X, Y, T, p0, p1)."""
    z, one = Const(0.0), Const(1.0)
    T = parse_expr("T")
    return {"R_X": (one, Const(-float(eps)) * T, z, z, z),
            "R_Y": (z, one, z, z, z),
            "R_T": (z, z, one, z, z)}


def heisenberg_pencil(eps: float) -> PoissonPencil:
    if eps == 0:
        raise PoissonError("eps must be nonzero")
    params = {"eps": float(eps)}
    return pencil_from_lax(*hypercr_lax(parse_expr("eps*X^2/2", parameters=params), params))


def heisenberg_invariance(eps: float, lambdas=(0.0, 1.0, 2.0, -1.5),
                          points=((0.3, -0.2, 0.5, 0.0, 0.0), (-0.7, 1.1, 0.2, 0.4, -0.3)),
                          tol: float = 1e-11) -> dict:
    """Lie derivatives of the Heisenberg pencil along the right-invariant fields.

    Checks ``L_{R_X} P(lam) = s eps lam P0`` for the recorded sign ``s`` and
    ``L_{R_Y} P = L_{R_T} P = 0``.
    """
    pencil = heisenberg_pencil(eps)
    gens = heisenberg_generators(eps)
    s = conventions.HEISENBERG_LIE_SIGN
    norms = {"R_X": 0.0, "R_Y": 0.0, "R_T": 0.0}
    opposite = 0.0
    for lam in lambdas:
        P = pencil.bivector(lam)
        for p in points:
            P0 = pencil.P0.at(p)
            for name, V in gens.items():
                L = lie_derivative_bivector(P, V, p)
                if name == "R_X":
                    norms[name] = max(norms[name], float(np.abs(L - s * eps * lam * P0).max()))
                    opposite = max(opposite, float(np.abs(L + s * eps * lam * P0).max()))
                else:
                    norms[name] = max(norms[name], float(np.abs(L).max()))
    checks = [{"name": f"lie_{k}", "max_residual": v, "tolerance": tol, "pass": v <= tol}
              for k, v in norms.items()]
    return {"eps": eps, "sign": s, "lambdas": list(lambdas), "checks": checks,
            "opposite_sign_residual": opposite}


def invariance_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
