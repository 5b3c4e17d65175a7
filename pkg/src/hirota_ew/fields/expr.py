"""Closed-form scalar fields as expression trees.

Trees are immutable and may share sub-trees (symbolic differentiation
reuses its input), so evaluation memoises on node identity.  The same
``evaluate`` walk works for floats, numpy arrays and :class:`Jet` values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .. import jets
from ..jets import Jet


class EvaluationError(ValueError):
    """Unbound parameter or undeclared coordinate during evaluation."""


@dataclass(frozen=True)
class Chart:
    """Ordered coordinate labels, e.g. ``Chart(("x", "y", "z"))``."""

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate coordinate names in {names}")
        if not 1 <= len(names) <= 9:
            raise ValueError("charts have between 1 and 9 coordinates")

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def __iter__(self):
        return iter(self.names)

    def __len__(self):
        return len(self.names)


HIROTA = Chart(("x", "y", "z"))
HYPERCR = Chart(("X", "Y", "T"))


# -- nodes ---------------------------------------------------------------------

class Expr:
    """Base class of expression nodes."""

    __slots__ = ()
    prec = 5

    # operator sugar with light constant folding
    def __add__(self, o):
        return add(self, as_expr(o))

    def __radd__(self, o):
        return add(as_expr(o), self)

    def __sub__(self, o):
        return sub(self, as_expr(o))

    def __rsub__(self, o):
        return sub(as_expr(o), self)

    def __mul__(self, o):
        return mul(self, as_expr(o))

    def __rmul__(self, o):
        return mul(as_expr(o), self)

    def __truediv__(self, o):
        return div(self, as_expr(o))

    def __rtruediv__(self, o):
        return div(as_expr(o), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)):
            raise TypeError("only integer powers are supported")
        return int_pow(self, int(k))

    def __str__(self):
        from .parser import to_text
        return to_text(self)

    # evaluation --------------------------------------------------------
    def evaluate(self, env: Mapping[str, object], _memo: dict | None = None):
        memo = {} if _memo is None else _memo
        return _eval(self, env, memo)

    def diff(self, name: str) -> "Expr":
        return _diff(self, name, {})

    def symbols(self) -> set[str]:
        out: set[str] = set()
        seen: set[int] = set()
        stack = [self]
        while stack:
            e = stack.pop()
            if id(e) in seen:
                continue
            seen.add(id(e))
            if isinstance(e, Symbol):
                out.add(e.name)
            stack.extend(e.children())
        return out

    def parameters(self, chart: Chart) -> set[str]:
        return self.symbols() - set(chart.names)

    def children(self) -> tuple["Expr", ...]:
        return ()

    def is_const(self, v: float | None = None) -> bool:
        return False


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def is_const(self, v=None):
        return v is None or self.value == v


@dataclass(frozen=True, eq=True)
class Symbol(Expr):
    name: str


class Coord(Symbol):
    """A coordinate of the chart the expression is evaluated on."""


class Param(Symbol):
    """A named constant bound at evaluation time (a, b, eps, ...)."""


@dataclass(frozen=True, eq=True)
class Binary(Expr):
    a: Expr
    b: Expr

    def children(self):
        return (self.a, self.b)


class Add(Binary):
    prec = 1


class Sub(Binary):
    prec = 1


class Mul(Binary):
    prec = 2


class Div(Binary):
    prec = 2


@dataclass(frozen=True, eq=True)
class Unary(Expr):
    a: Expr
    fname = ""

    def children(self):
        return (self.a,)


class Neg(Unary):
    prec = 3


class Exp(Unary):
    fname = "exp"


class Ln(Unary):
    fname = "ln"


class Sin(Unary):
    fname = "sin"


class Cos(Unary):
    fname = "cos"


@dataclass(frozen=True, eq=True)
class IntPow(Expr):
    a: Expr
    k: int
    prec = 4

    def children(self):
        return (self.a,)


FUNCTIONS: dict[str, type[Unary]] = {"exp": Exp, "ln": Ln, "sin": Sin, "cos": Cos}


# -- smart constructors --------------------------------------------------------

def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float, np.integer, np.floating)):
        return Const(float(v))
    raise TypeError(f"cannot convert {type(v).__name__} to Expr")


ZERO = Const(0.0)
ONE = Const(1.0)


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const(0.0):
        return b
    if b.is_const(0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(b, Neg):
        return Sub(a, b.a)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if b.is_const(0.0):
        return a
    if a.is_const(0.0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if isinstance(b, Neg):
        return Add(a, b.a)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const(0.0) or b.is_const(0.0):
        return ZERO
    if a.is_const(1.0):
        return b
    if b.is_const(1.0):
        return a
    if a.is_const(-1.0):
        return neg(b)
    if b.is_const(-1.0):
        return neg(a)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if b.is_const(0.0):
        raise ZeroDivisionError("division by constant zero")
    if a.is_const(0.0):
        return ZERO
    if b.is_const(1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value / b.value)
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    if isinstance(a, (Mul, Div)) and isinstance(a.a, Const):
        return type(a)(Const(-a.a.value), a.b)
    return Neg(a)


def int_pow(a: Expr, k: int) -> Expr:
    if k == 0:
        return ONE
    if k == 1:
        return a
    if isinstance(a, Const):
        return Const(a.value ** k)
    return IntPow(a, k)


def exp(a) -> Expr:
    a = as_expr(a)
    return Const(math.exp(a.value)) if isinstance(a, Const) else Exp(a)


def ln(a) -> Expr:
    a = as_expr(a)
    if isinstance(a, Const) and a.value > 0:
        return Const(math.log(a.value))
    return Ln(a)


def sin(a) -> Expr:
    a = as_expr(a)
    return Const(math.sin(a.value)) if isinstance(a, Const) else Sin(a)


def cos(a) -> Expr:
    a = as_expr(a)
    return Const(math.cos(a.value)) if isinstance(a, Const) else Cos(a)


def coords(*names: str) -> tuple[Coord, ...]:
    return tuple(Coord(n) for n in names)


def params(*names: str) -> tuple[Param, ...]:
    return tuple(Param(n) for n in names)


# -- evaluation ------------------------------------------------------------------

_UNARY_EVAL: dict[type, Callable] = {
    Neg: lambda v: -v,
    Exp: jets.exp,
    Ln: jets.ln,
    Sin: jets.sin,
    Cos: jets.cos,
}


def _eval(e: Expr, env, memo):
    key = id(e)
    if key in memo:
        return memo[key]
    t = type(e)
    if t is Const:
        r = e.value
    elif isinstance(e, Symbol):
        try:
            r = env[e.name]
        except KeyError:
            what = "coordinate" if t is Coord else "parameter"
            msg = "not declared in chart" if t is Coord else "is unbound"
            raise EvaluationError(f"{what} {e.name!r} {msg}") from None
    elif t is Add:
        r = _eval(e.a, env, memo) + _eval(e.b, env, memo)
    elif t is Sub:
        r = _eval(e.a, env, memo) - _eval(e.b, env, memo)
    elif t is Mul:
        r = _eval(e.a, env, memo) * _eval(e.b, env, memo)
    elif t is Div:
        den = _eval(e.b, env, memo)
        if not isinstance(den, Jet) and np.any(np.abs(np.asarray(den)) < jets.DEGENERATE_TOL):
            raise jets.DegenerateJetError("division by (near) zero value")
        r = _eval(e.a, env, memo) / den
    elif t is IntPow:
        base = _eval(e.a, env, memo)
        if isinstance(base, Jet):
            r = base.int_pow(e.k)
        else:
            r = np.power(np.asarray(base, dtype=float), float(e.k))
            if np.ndim(r) == 0:
                r = float(r)
    else:
        r = _UNARY_EVAL[t](_eval(e.a, env, memo))
    memo[key] = r
    return r


def _diff(e: Expr, name: str, memo) -> Expr:
    key = id(e)
    if key in memo:
        return memo[key]
    t = type(e)
    if t is Const:
        r = ZERO
    elif isinstance(e, Symbol):
        r = ONE if e.name == name else ZERO
    elif t is Add:
        r = add(_diff(e.a, name, memo), _diff(e.b, name, memo))
    elif t is Sub:
        r = sub(_diff(e.a, name, memo), _diff(e.b, name, memo))
    elif t is Mul:
        r = add(mul(_diff(e.a, name, memo), e.b), mul(e.a, _diff(e.b, name, memo)))
    elif t is Div:
        da, db = _diff(e.a, name, memo), _diff(e.b, name, memo)
        if db.is_const(0.0):
            r = div(da, e.b)
        else:
            r = div(sub(mul(da, e.b), mul(e.a, db)), int_pow(e.b, 2))
    elif t is Neg:
        r = neg(_diff(e.a, name, memo))
    elif t is IntPow:
        r = mul(mul(Const(float(e.k)), int_pow(e.a, e.k - 1)), _diff(e.a, name, memo))
    elif t is Exp:
        r = mul(e, _diff(e.a, name, memo))
    elif t is Ln:
        r = div(_diff(e.a, name, memo), e.a)
    elif t is Sin:
        r = mul(Cos(e.a), _diff(e.a, name, memo))
    elif t is Cos:
        r = neg(mul(Sin(e.a), _diff(e.a, name, memo)))
    else:  # pragma: no cover
        raise TypeError(f"unknown node {t.__name__}")
    memo[key] = r
    return r


def partial(e: Expr, *names: str) -> Expr:
    """Repeated symbolic derivative, ``partial(w, "x", "y")`` = w_xy."""
    for n in names:
        e = e.diff(n)
    return e


# -- jet-valued fields -----------------------------------------------------------

class JetField:
    """A scalar field known only through its jets, ``fn(point, order) -> Jet``.

    Used where a closed-form tree would be unwieldy, e.g. the metric produced
    by a Jones--Tod reduction, which involves a 4x4 inverse.
    """

    __slots__ = ("fn", "label")

    def __init__(self, fn: Callable[[tuple, int], Jet], label: str = "<jet field>"):
        self.fn = fn
        self.label = label

    def __repr__(self):
        return f"JetField({self.label})"


def make_env(chart: Chart, p: Sequence[float], K: int, params: Mapping[str, float] | None):
    p = tuple(float(v) for v in p)
    if len(p) != chart.dim:
        raise ValueError(f"point {p} does not match chart {chart.names}")
    if not all(math.isfinite(v) for v in p):
        raise ValueError("evaluation point must be finite")
    env: dict[str, object] = dict(params or {})
    for i, name in enumerate(chart.names):
        env[name] = jets.jet_coordinate(i, p, chart.dim, K)
    return env


def eval_jet(f, chart: Chart, p: Sequence[float], K: int,
             params: Mapping[str, float] | None = None, *, _env=None, _memo=None) -> Jet:
    """Exact truncated Taylor expansion of ``f`` at ``p``.

    ``f`` may be an :class:`Expr`, a :class:`JetField` or a plain number.
    """
    if isinstance(f, JetField):
        return f.fn(tuple(float(v) for v in p), K)
    env = _env if _env is not None else make_env(chart, p, K, params)
    v = as_expr(f).evaluate(env, _memo)
    if not isinstance(v, Jet):
        return jets.Jet.constant(float(v), chart.dim, K, tuple(float(t) for t in p))
    return v


def eval_jets(fs, chart: Chart, p, K: int, params=None) -> list:
    """Evaluate several fields sharing one environment and memo table."""
    env = make_env(chart, p, K, params)
    memo: dict = {}
    return [eval_jet(f, chart, p, K, params, _env=env, _memo=memo) for f in fs]


def eval_value(f, chart: Chart, p, params=None) -> float:
    return eval_jet(f, chart, p, 0, params).value


def eval_grid(f: Expr, chart: Chart, axes: Sequence[np.ndarray], params=None) -> np.ndarray:
    """Sample an expression on the tensor grid spanned by ``axes``."""
    mesh = np.meshgrid(*axes, indexing="ij")
    env: dict[str, object] = dict(params or {})
    env.update({n: m for n, m in zip(chart.names, mesh)})
    v = as_expr(f).evaluate(env)
    return np.broadcast_to(np.asarray(v, dtype=float), mesh[0].shape).copy()
