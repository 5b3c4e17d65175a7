"""Truncated multivariate Taylor series (jets).

A :class:`Jet` stores the normalised Taylor coefficients
``c_alpha = d^alpha f(p) / alpha!`` of a scalar function of ``n`` variables
about a base point ``p``, for all multi-indices with ``|alpha| <= K``.
Coefficients are kept densely in graded-lexicographic order.

Arithmetic is exact up to floating point rounding; every quantity used by
the geometry code (Christoffel symbols, Lax commutators, Jacobiators) is
obtained by reading derivatives off jets.
"""
from __future__ import annotations

import functools
import itertools
import math
from typing import Sequence

import numpy as np

#: Constant terms smaller than this are treated as zero by ``/`` and ``ln``.
DEGENERATE_TOL = 1e-12


class JetError(ValueError):
    """Raised for jets that cannot be combined (shape mismatch)."""


class DegenerateJetError(ArithmeticError):
    """Division by, or logarithm of, a jet with inadmissible constant term."""


@functools.lru_cache(maxsize=None)
def multi_indices(n: int, order: int) -> tuple[tuple[int, ...], ...]:
    """All exponent tuples with total degree <= order, graded-lex order."""
    out = []
    for d in range(order + 1):
        # lexicographically descending within a degree: x^d first
        for combo in itertools.combinations_with_replacement(range(n), d):
            alpha = [0] * n
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _index(n: int, order: int) -> dict:
    return {a: k for k, a in enumerate(multi_indices(n, order))}


@functools.lru_cache(maxsize=None)
def _factorials(n: int, order: int) -> np.ndarray:
    f = np.array([math.prod(math.factorial(e) for e in a) for a in multi_indices(n, order)],
                 dtype=float)
    f.setflags(write=False)
    return f


@functools.lru_cache(maxsize=None)
def _degrees(n: int, order: int) -> np.ndarray:
    d = np.array([sum(a) for a in multi_indices(n, order)])
    d.setflags(write=False)
    return d


@functools.lru_cache(maxsize=None)
def _product_table(n: int, order: int):
    idx = _index(n, order)
    mis = multi_indices(n, order)
    ii, jj, kk = [], [], []
    for i, a in enumerate(mis):
        for j, b in enumerate(mis):
            if sum(a) + sum(b) > order:
                continue
            ii.append(i)
            jj.append(j)
            kk.append(idx[tuple(p + q for p, q in zip(a, b))])
    return np.array(ii), np.array(jj), np.array(kk)


@functools.lru_cache(maxsize=None)
def _diff_table(n: int, order: int, axis: int):
    """Source indices and weights so that d/dx_axis maps order K to K-1."""
    big = _index(n, order)
    src, wts = [], []
    for a in multi_indices(n, order - 1):
        b = list(a)
        b[axis] += 1
        src.append(big[tuple(b)])
        wts.append(b[axis])
    return np.array(src, dtype=int), np.array(wts, dtype=float)


@functools.lru_cache(maxsize=None)
def _restrict_table(n: int, order: int, keep: tuple[int, ...]):
    big = _index(n, order)
    src = []
    for a in multi_indices(len(keep), order):
        full = [0] * n
        for pos, ax in enumerate(keep):
            full[ax] = a[pos]
        src.append(big[tuple(full)])
    return np.array(src, dtype=int)


def n_coeffs(n: int, order: int) -> int:
    return math.comb(n + order, order)


class Jet:
    """Immutable truncated Taylor expansion of a scalar field at a point."""

    __slots__ = ("dim", "order", "base_point", "coeffs")
    __array_priority__ = 1000  # make numpy scalars defer to Jet operators

    def __init__(self, dim: int, order: int, base_point: Sequence[float], coeffs):
        if dim < 1 or order < 0:
            raise JetError(f"invalid jet shape dim={dim}, order={order}")
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (n_coeffs(dim, order),):
            raise JetError(f"expected {n_coeffs(dim, order)} coefficients, got {coeffs.shape}")
        coeffs.setflags(write=False)
        base_point = tuple(float(v) for v in base_point)
        if len(base_point) != dim:
            raise JetError("base point dimension mismatch")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "base_point", base_point)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("Jet is immutable")

    # -- construction -----------------------------------------------------
    @classmethod
    def constant(cls, value: float, dim: int, order: int, base_point=None) -> "Jet":
        c = np.zeros(n_coeffs(dim, order))
        c[0] = value
        return cls(dim, order, base_point if base_point is not None else (0.0,) * dim, c)

    def _like(self, coeffs) -> "Jet":
        return Jet(self.dim, self.order, self.base_point, coeffs)

    # -- inspection -------------------------------------------------------
    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    def coeff(self, alpha: Sequence[int]) -> float:
        alpha = tuple(alpha)
        if len(alpha) != self.dim:
            raise JetError("multi-index has wrong length")
        if sum(alpha) > self.order:
            raise JetError(f"|alpha|={sum(alpha)} exceeds jet order {self.order}")
        return float(self.coeffs[_index(self.dim, self.order)[alpha]])

    def derivative(self, alpha: Sequence[int]) -> float:
        """Partial derivative d^alpha f at the base point."""
        alpha = tuple(alpha)
        return self.coeff(alpha) * math.prod(math.factorial(e) for e in alpha)

    def partial(self, *axes: int) -> float:
        """Derivative along the listed axes, e.g. ``j.partial(0, 2)`` = f_xz."""
        alpha = [0] * self.dim
        for ax in axes:
            alpha[ax] += 1
        return self.derivative(alpha)

    def gradient(self) -> np.ndarray:
        return np.array([self.partial(i) for i in range(self.dim)])

    def hessian(self) -> np.ndarray:
        H = np.empty((self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                H[i, j] = H[j, i] = self.partial(i, j)
        return H

    def __repr__(self) -> str:
        return f"Jet(dim={self.dim}, order={self.order}, value={self.value:.6g})"

    # -- structural operations -------------------------------------------
    def diff(self, axis: int) -> "Jet":
        """Jet of the partial derivative along ``axis`` (order drops by one)."""
        if not 0 <= axis < self.dim:
            raise JetError(f"axis {axis} out of range for dim {self.dim}")
        if self.order == 0:
            raise JetError("cannot differentiate an order-0 jet")
        src, wts = _diff_table(self.dim, self.order, axis)
        return Jet(self.dim, self.order - 1, self.base_point, self.coeffs[src] * wts)

    def integrate(self, axis: int) -> "Jet":
        """Antiderivative along ``axis`` vanishing on ``x_axis = p_axis`` (order rises by one)."""
        if not 0 <= axis < self.dim:
            raise JetError(f"axis {axis} out of range for dim {self.dim}")
        idx = _index(self.dim, self.order + 1)
        out = np.zeros(n_coeffs(self.dim, self.order + 1))
        for k, alpha in enumerate(multi_indices(self.dim, self.order)):
            up = list(alpha)
            up[axis] += 1
            out[idx[tuple(up)]] = self.coeffs[k] / up[axis]
        return Jet(self.dim, self.order + 1, self.base_point, out)

    def drop_axis_powers(self, axis: int) -> "Jet":
        """Freeze ``x_axis`` at the base point but keep the jet's shape."""
        mis = np.array(multi_indices(self.dim, self.order))
        return self._like(np.where(mis[:, axis] == 0, self.coeffs, 0.0))

    def recenter(self, point: Sequence[float]) -> "Jet":
        """Re-expand the Taylor polynomial about ``point`` (exact for polynomials)."""
        point = [float(v) for v in point]
        shift = [jet_coordinate(i, point, self.dim, self.order) - b
                 for i, b in enumerate(self.base_point)]
        out = Jet.constant(0.0, self.dim, self.order, point)
        powers = [[Jet.constant(1.0, self.dim, self.order, point)] for _ in range(self.dim)]
        for i in range(self.dim):
            for _ in range(self.order):
                powers[i].append(powers[i][-1] * shift[i])
        for k, alpha in enumerate(multi_indices(self.dim, self.order)):
            c = self.coeffs[k]
            if c == 0.0:
                continue
            term = c
            for i, e in enumerate(alpha):
                if e:
                    term = powers[i][e] * term
            out = out + term
        return out

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.dim, order, self.base_point, self.coeffs[: n_coeffs(self.dim, order)])

    def restrict(self, keep: Sequence[int]) -> "Jet":
        """Restrict to the sub-space of the kept axes (others frozen at base)."""
        keep = tuple(keep)
        src = _restrict_table(self.dim, self.order, keep)
        return Jet(len(keep), self.order, [self.base_point[k] for k in keep], self.coeffs[src])

    def slice_axis(self, axis: int, power: int) -> "Jet":
        """Coefficient of ``(x_axis - p_axis)^power`` as a jet in the other axes.

        The result has order ``K - power`` and dimension ``n - 1``.
        """
        if power > self.order:
            raise JetError("power exceeds jet order")
        keep = [i for i in range(self.dim) if i != axis]
        n2, k2 = len(keep), self.order - power
        idx = _index(self.dim, self.order)
        src = []
        for a in multi_indices(n2, k2):
            full = [0] * self.dim
            for pos, ax in enumerate(keep):
                full[ax] = a[pos]
            full[axis] = power
            src.append(idx[tuple(full)])
        return Jet(n2, k2, [self.base_point[k] for k in keep], self.coeffs[np.array(src, dtype=int)])

    def compose(self, args: Sequence["Jet"]) -> "Jet":
        """Evaluate this jet's Taylor polynomial at jet-valued arguments.

        ``args[i]`` supplies coordinate ``i``; its constant term must equal
        ``base_point[i]``. The result lives on the common space of ``args``.
        """
        if len(args) != self.dim:
            raise JetError("compose needs one argument per variable")
        for a, p in zip(args, self.base_point):
            if abs(a.value - p) > 1e-9 * max(1.0, abs(p)):
                raise JetError("argument constant terms must match the base point")
        shifted = [a - a.value for a in args]
        ref = args[0]
        out = Jet.constant(0.0, ref.dim, ref.order, ref.base_point)
        powers = [[Jet.constant(1.0, ref.dim, ref.order, ref.base_point)] for _ in args]
        for i, s in enumerate(shifted):
            for _ in range(self.order):
                powers[i].append(powers[i][-1] * s)
        for k, alpha in enumerate(multi_indices(self.dim, self.order)):
            c = self.coeffs[k]
            if c == 0.0:
                continue
            term = None
            for i, e in enumerate(alpha):
                if e:
                    term = powers[i][e] if term is None else term * powers[i][e]
            out = out + (c if term is None else c * term)
        return out

    def polynomial(self, point: Sequence[float]) -> float:
        """Evaluate the Taylor polynomial at a nearby point."""
        dx = np.asarray(point, dtype=float) - np.asarray(self.base_point)
        mis = np.array(multi_indices(self.dim, self.order))
        return float(np.sum(self.coeffs * np.prod(dx[None, :] ** mis, axis=1)))

    # -- arithmetic ----------------------------------------------------------
    def _check(self, other: "Jet") -> None:
        if (self.dim, self.order) != (other.dim, other.order) or self.base_point != other.base_point:
            raise JetError(
                f"jet shape mismatch: ({self.dim},{self.order},{self.base_point}) vs "
                f"({other.dim},{other.order},{other.base_point})"
            )

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return self._like(self.coeffs + other.coeffs)
        c = self.coeffs.copy()
        c[0] += other
        return self._like(c)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return self._like(self.coeffs - other.coeffs)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            i, j, k = _product_table(self.dim, self.order)
            out = np.bincount(k, weights=self.coeffs[i] * other.coeffs[j],
                              minlength=len(self.coeffs))
            return self._like(out)
        return self._like(self.coeffs * other)

    __rmul__ = __mul__

    def _series(self, taylor: Sequence[float]) -> "Jet":
        """f(self) given f's Taylor coefficients ``taylor[k] = f^(k)(c0)/k!``."""
        u = self - self.value
        out = Jet.constant(taylor[self.order], self.dim, self.order, self.base_point)
        for k in range(self.order - 1, -1, -1):  # Horner in the nilpotent part
            out = out * u + taylor[k]
        return out

    def reciprocal(self) -> "Jet":
        c0 = self.value
        if abs(c0) < DEGENERATE_TOL:
            raise DegenerateJetError(f"division by jet with constant term {c0:.3e}")
        return self._series([(-1.0) ** k / c0 ** (k + 1) for k in range(self.order + 1)])

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if abs(other) < DEGENERATE_TOL:
            raise DegenerateJetError("division by (near) zero constant")
        return self._like(self.coeffs / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        if isinstance(k, (int, np.integer)):
            return self.int_pow(int(k))
        return NotImplemented

    def int_pow(self, k: int) -> "Jet":
        if k < 0:
            return self.reciprocal().int_pow(-k)
        result = Jet.constant(1.0, self.dim, self.order, self.base_point)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def exp(self) -> "Jet":
        e = math.exp(self.value)
        return self._series([e / math.factorial(k) for k in range(self.order + 1)])

    def ln(self) -> "Jet":
        c0 = self.value
        if c0 < DEGENERATE_TOL:
            raise DegenerateJetError(f"ln of jet with constant term {c0:.3e}")
        t = [math.log(c0)] + [(-1.0) ** (k + 1) / (k * c0 ** k) for k in range(1, self.order + 1)]
        return self._series(t)

    def sqrt(self) -> "Jet":
        c0 = self.value
        if c0 < DEGENERATE_TOL:
            raise DegenerateJetError(f"sqrt of jet with constant term {c0:.3e}")
        t, coef = [], 1.0
        for k in range(self.order + 1):
            t.append(coef * c0 ** (0.5 - k))
            coef *= (0.5 - k) / (k + 1)
        return self._series(t)

    def sin(self) -> "Jet":
        s, c = math.sin(self.value), math.cos(self.value)
        cyc = [s, c, -s, -c]
        return self._series([cyc[k % 4] / math.factorial(k) for k in range(self.order + 1)])

    def cos(self) -> "Jet":
        s, c = math.sin(self.value), math.cos(self.value)
        cyc = [c, -s, -c, s]
        return self._series([cyc[k % 4] / math.factorial(k) for k in range(self.order + 1)])


# -- public operations --------------------------------------------------------

def jet_coordinate(i: int, p: Sequence[float], n: int, K: int) -> Jet:
    """The coordinate function ``x_i`` as a jet at ``p``."""
    if not 0 <= i < n:
        raise JetError(f"axis {i} out of range for dimension {n}")
    if len(p) != n:
        raise JetError("point has wrong dimension")
    c = np.zeros(n_coeffs(n, K))
    c[0] = p[i]
    if K >= 1:
        c[1 + i] = 1.0
    return Jet(n, K, p, c)


def jet_coordinates(p: Sequence[float], K: int) -> list[Jet]:
    return [jet_coordinate(i, p, len(p), K) for i in range(len(p))]


def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    ops = {"add": Jet.__add__, "sub": Jet.__sub__, "mul": Jet.__mul__, "div": Jet.__truediv__}
    if op not in ops:
        raise ValueError(f"unknown jet operation {op!r}")
    if not isinstance(b, Jet):
        raise JetError("second operand must be a Jet")
    a._check(b)
    return ops[op](a, b)


def jet_transcend(a: Jet, op: str, k: int | None = None) -> Jet:
    if op == "exp":
        return a.exp()
    if op == "ln":
        return a.ln()
    if op == "int_pow":
        if k is None:
            raise ValueError("int_pow needs an exponent")
        return a.int_pow(k)
    raise ValueError(f"unknown transcendental {op!r}")


# -- scalar/array/jet dispatch used by expression evaluation -------------------

def exp(x):
    return x.exp() if isinstance(x, Jet) else np.exp(x)


def ln(x):
    if isinstance(x, Jet):
        return x.ln()
    arr = np.asarray(x)
    if np.any(arr < DEGENERATE_TOL):
        raise DegenerateJetError("ln of non-positive value")
    return np.log(x)


def sin(x):
    return x.sin() if isinstance(x, Jet) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Jet) else np.cos(x)


def value_of(x) -> float:
    return x.value if isinstance(x, Jet) else float(x)


def jet_matrix_inverse(m: list[list]) -> list[list]:
    """Inverse of a 2x2, 3x3 or 4x4 matrix of jets (or floats) by adjugate."""
    n = len(m)
    det = det_adj(m)
    if abs(value_of(det)) < DEGENERATE_TOL:
        raise DegenerateJetError("singular matrix")
    inv_det = 1.0 / det
    return [[cofactor(m, j, i) * inv_det for j in range(n)] for i in range(n)]


def _minor(m, i, j):
    return [[m[r][c] for c in range(len(m)) if c != j] for r in range(len(m)) if r != i]


def det_adj(m):
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = 0.0
    for j in range(n):
        if _is_zero(m[0][j]):
            continue
        term = m[0][j] * det_adj(_minor(m, 0, j))
        total = total + term if j % 2 == 0 else total - term
    return total


def cofactor(m, i, j):
    sub = det_adj(_minor(m, i, j))
    return sub if (i + j) % 2 == 0 else -sub


def _is_zero(v) -> bool:
    if isinstance(v, Jet):
        return not np.any(v.coeffs)
    return v == 0
