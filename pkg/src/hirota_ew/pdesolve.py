"""Hyper-CR evolution as a Cauchy problem in Y, grid residuals, convergence orders.

``H_YY = H_XT + H_Y H_XX - H_X H_XY - f`` is integrated in ``Y`` with RK4
for the pair ``(H, G = H_Y)`` on a grid periodic in ``X`` and ``T``, with
second-order central differences in space. ``f`` is an optional forcing: a
field ``H*`` solves the forced problem exactly when ``f`` is the hyper-CR
residual of ``H*``.

A non-periodic part can be split off as a closed-form ``background`` ``B``:
the solver evolves the periodic remainder ``u = H - B`` and only ever
differentiates ``u`` on the grid.

The Y-Cauchy problem is not well posed for all data (modes with
``k_X k_T < 0`` grow), so the Y range is capped and blow-up is reported.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .fields import (Chart, Expr, GridField, HIROTA, HYPERCR, eval_grid, fd_array, parse_expr)
from .fields.expr import as_expr

DEFAULT_Y_CAP = 1.0


class SolverError(ValueError):
    pass


class BlowUpError(SolverError):
    pass


@dataclass
class EvolutionState:
    """``(H, G = H_Y)`` on the periodic (X, T) grid at level ``y``."""

    x0: float
    t0: float
    hx: float
    ht: float
    H: np.ndarray
    G: np.ndarray
    y: float = 0.0

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.G = np.asarray(self.G, dtype=float)
        if self.H.shape != self.G.shape or self.H.ndim != 2:
            raise SolverError("H and G must be 2-d arrays of the same shape")
        if min(self.H.shape) < 5:
            raise SolverError("at least 5 nodes per axis are required")
        if not (np.all(np.isfinite(self.H)) and np.all(np.isfinite(self.G))):
            raise SolverError("initial data must be finite")

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        nx, nt = self.H.shape
        return self.x0 + self.hx * np.arange(nx), self.t0 + self.ht * np.arange(nt)


@dataclass
class SolveReport:
    steps: int
    max_residual: float
    blow_up: bool
    wall_time: float
    y_final: float
    message: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass
class SolverConfig:
    nx: int = 64
    nt: int = 64
    Lx: float = 2 * math.pi
    Lt: float = 2 * math.pi
    y_final: float = 0.2
    steps: int = 100
    init_H: str = "0"
    init_G: str = "0"
    forcing: str | None = None
    background: str | None = None
    y_cap: float = DEFAULT_Y_CAP
    params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, text: str) -> "SolverConfig":
        data = json.loads(text)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise SolverError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def expr(self, text: str | None) -> Expr | None:
        if text is None:
            return None
        return parse_expr(text, coordinates=HYPERCR.names, parameters=self.params or None)

    def initial_state(self) -> EvolutionState:
        hx, ht = self.Lx / self.nx, self.Lt / self.nt
        x0, t0 = -self.Lx / 2, -self.Lt / 2
        X = x0 + hx * np.arange(self.nx)
        T = t0 + ht * np.arange(self.nt)
        Y = np.array([0.0])
        H = eval_grid(self.expr(self.init_H), HYPERCR, (X, Y, T), self.params)[:, 0, :]
        G = eval_grid(self.expr(self.init_G), HYPERCR, (X, Y, T), self.params)[:, 0, :]
        return EvolutionState(x0, t0, hx, ht, H, G, 0.0)


# -- the evolution -------------------------------------------------------------------

class _Background:
    """Closed-form ``B`` and the derivative fields entering the remainder equation."""

    NAMES = ("X", "Y", "XX", "XT", "XY", "YY")

    def __init__(self, B: Expr | None, X, T, params):
        self.X, self.T, self.params = X, T, params
        self.exprs = None
        if B is not None:
            B = as_expr(B)
            self.exprs = {n: _partial(B, n) for n in self.NAMES}
            self.B = B

    def fields(self, y: float) -> dict[str, np.ndarray] | None:
        if self.exprs is None:
            return None
        axes = (self.X, np.array([y]), self.T)
        return {n: eval_grid(e, HYPERCR, axes, self.params)[:, 0, :] for n, e in self.exprs.items()}

    def value(self, y: float) -> np.ndarray:
        if self.exprs is None:
            return 0.0
        return eval_grid(self.B, HYPERCR, (self.X, np.array([y]), self.T), self.params)[:, 0, :]


def _partial(e: Expr, spec: str) -> Expr:
    for ch in spec:
        e = e.diff(ch)
    return e


def _rhs(u, v, y, hx, ht, bg: _Background, forcing, X, T, params):
    per = (True, True)
    sp = (hx, ht)
    uX = fd_array(u, sp, per, (1, 0))
    uXX = fd_array(u, sp, per, (2, 0))
    uXT = fd_array(u, sp, per, (1, 1))
    vX = fd_array(v, sp, per, (1, 0))
    b = bg.fields(y)
    if b is None:
        acc = uXT + v * uXX - uX * vX
    else:
        HX, HY = b["X"] + uX, b["Y"] + v
        acc = (b["XT"] + uXT) + HY * (b["XX"] + uXX) - HX * (b["XY"] + vX) - b["YY"]
    if forcing is not None:
        acc = acc - eval_grid(forcing, HYPERCR, (X, np.array([y]), T), params)[:, 0, :]
    return v, acc


def hypercr_evolve(init: EvolutionState, y_final: float, steps: int, forcing: Expr | None = None,
                   background: Expr | None = None, params=None, y_cap: float = DEFAULT_Y_CAP,
                   raise_on_blowup: bool = False) -> tuple[GridField, SolveReport]:
    """Evolve ``(H, H_Y)`` from ``init.y`` to ``y_final`` in ``steps`` RK4 steps.

    With a ``background`` the state holds the remainder ``H - B``; the
    returned grid always holds the full ``H`` on (X, Y, T).
    """
    if steps < 1:
        raise SolverError("steps must be >= 1")
    if abs(y_final) > y_cap:
        raise SolverError(f"|y_final| = {abs(y_final)} exceeds the cap {y_cap}")
    params = dict(params or {})
    start = time.perf_counter()
    X, T = init.axes
    bg = _Background(background, X, T, params)
    forcing = as_expr(forcing) if forcing is not None else None
    dy = (y_final - init.y) / steps
    u, v, y = init.H.copy(), init.G.copy(), init.y
    slabs = [u + bg.value(y)]
    blow_up = False
    message = ""
    taken = 0
    # overflow is detected below and reported, not warned about
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(steps):
            k1 = _rhs(u, v, y, init.hx, init.ht, bg, forcing, X, T, params)
            k2 = _rhs(u + 0.5 * dy * k1[0], v + 0.5 * dy * k1[1], y + 0.5 * dy,
                      init.hx, init.ht, bg, forcing, X, T, params)
            k3 = _rhs(u + 0.5 * dy * k2[0], v + 0.5 * dy * k2[1], y + 0.5 * dy,
                      init.hx, init.ht, bg, forcing, X, T, params)
            k4 = _rhs(u + dy * k3[0], v + dy * k3[1], y + dy, init.hx, init.ht, bg, forcing, X, T, params)
            u = u + dy / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            v = v + dy / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            y = init.y + (n + 1) * dy
            taken = n + 1
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                blow_up = True
                message = f"non-finite values at Y = {y:.6g} (step {taken})"
                if raise_on_blowup:
                    raise BlowUpError(message)
                break
            slabs.append(u + bg.value(y))
    vals = np.stack(slabs, axis=1)
    # a background is generally not periodic, so the full H is flagged non-periodic
    per = bg.exprs is None
    if dy >= 0:
        origin, step = (init.x0, init.y, init.t0), dy
    else:
        vals = vals[:, ::-1, :]
        origin, step = (init.x0, init.y + dy * (vals.shape[1] - 1), init.t0), -dy
    grid = GridField(HYPERCR, origin, (init.hx, step, init.ht), vals, (per, False, per))
    res = float("nan")
    if not blow_up and grid.shape[1] >= 5:
        r, norms = residual_grid("hypercr", grid, forcing=forcing, params=params)
        res = norms["max"]
    report = SolveReport(taken, res, blow_up, time.perf_counter() - start, y, message)
    return grid, report


def solve_from_config(cfg: SolverConfig) -> tuple[GridField, SolveReport]:
    init = cfg.initial_state()
    B = cfg.expr(cfg.background)
    if B is not None:
        X, T = init.axes
        axes = (X, np.array([0.0]), T)
        init.H = init.H - eval_grid(B, HYPERCR, axes, cfg.params)[:, 0, :]
        init.G = init.G - eval_grid(B.diff("Y"), HYPERCR, axes, cfg.params)[:, 0, :]
    return hypercr_evolve(init, cfg.y_final, cfg.steps, cfg.expr(cfg.forcing), B, cfg.params,
                          cfg.y_cap)


# -- residuals on grids --------------------------------------------------------------

def _d(g: GridField, *names: str) -> np.ndarray:
    alpha = [0] * g.chart.dim
    for n in names:
        alpha[g.chart.index(n)] += 1
    return fd_array(g.values, g.spacing, g.periodic, alpha)


def residual_grid(kind: str, g: GridField, *, a: float | None = None, b: float | None = None,
                  constants: Sequence[float] | None = None, i: int | None = None,
                  j: int | None = None, forcing: Expr | None = None,
                  params=None) -> tuple[GridField, dict]:
    """Pointwise residual of ``kind`` in {"hirota", "hypercr", "hierarchy"} and its norms.

    Norms are taken over the interior (one node away from non-periodic edges).
    """
    if min(g.shape) < 5:
        raise SolverError("grid too small: at least 5 nodes per axis are required")
    if kind == "hirota":
        if a is None or b is None:
            raise SolverError("hirota residual needs a and b")
        n = g.chart.names
        wx, wy, wz = _d(g, n[0]), _d(g, n[1]), _d(g, n[2])
        r = (b - a) * wx * _d(g, n[1], n[2]) + a * wy * _d(g, n[2], n[0]) - b * wz * _d(g, n[0], n[1])
    elif kind == "hypercr":
        n = g.chart.names
        HX, HY = _d(g, n[0]), _d(g, n[1])
        r = _d(g, n[0], n[2]) - _d(g, n[1], n[1]) + HY * _d(g, n[0], n[0]) - HX * _d(g, n[0], n[1])
        if forcing is not None:
            r = r - eval_grid(forcing, g.chart, g.axes(), params)
    elif kind == "hierarchy":
        if constants is None or i is None or j is None or i == j:
            raise SolverError("hierarchy residual needs constants and two distinct times")
        n = g.chart.names
        ai, aj = constants[i], constants[j]
        I, J = n[i + 1], n[j + 1]
        r = ((ai - aj) * _d(g, n[0]) * _d(g, I, J) + aj * _d(g, I) * _d(g, J, n[0])
             - ai * _d(g, J) * _d(g, I, n[0]))
    else:
        raise SolverError(f"unknown residual kind {kind!r}")
    out = g.with_values(r)
    inner = r[g.interior(1)]
    norms = {"max": float(np.abs(inner).max()),
             "l2": float(np.sqrt(np.mean(inner ** 2)))}
    return out, norms


# -- convergence ---------------------------------------------------------------------

def observed_order(hs: Sequence[float], errors: Sequence[float], exact_tol: float = 1e-13) -> dict:
    """Least-squares slope of ``log error`` against ``log h``.

    Returns ``{"order": None, "verdict": "exact"}`` when every error is at
    rounding level.
    """
    if len(hs) < 3 or len(hs) != len(errors):
        raise SolverError("convergence measurement needs at least 3 refinements")
    errors = np.asarray(errors, dtype=float)
    if np.all(errors <= exact_tol):
        return {"order": None, "verdict": "exact", "errors": errors.tolist(), "h": list(hs)}
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise SolverError("errors must be positive and finite to fit an order")
    slope = float(np.polyfit(np.log(hs), np.log(errors), 1)[0])
    return {"order": slope, "verdict": "fitted", "errors": errors.tolist(), "h": list(hs)}


def convergence_order(cfg: SolverConfig, exact: Expr, refinements: Sequence[int],
                      x_window: float | None = None) -> dict:
    """Run the solver at ``nx = nt = n`` for each ``n`` and fit the order of
    ``max |H - exact|`` at ``y_final``; ``dY`` is scaled with ``h``.

    ``x_window`` restricts the error to ``|X| <= x_window``; needed when a
    non-periodic background puts a coefficient jump on the periodic seam.
    """
    if len(refinements) < 3:
        raise SolverError("convergence measurement needs at least 3 refinements")
    exact = as_expr(exact)
    hs, errs = [], []
    base_steps_per_h = cfg.steps / cfg.nx
    for n in refinements:
        c = SolverConfig(**{**asdict(cfg), "nx": n, "nt": n,
                            "steps": max(1, int(round(base_steps_per_h * n)))})
        grid, rep = solve_from_config(c)
        if rep.blow_up:
            raise BlowUpError(rep.message)
        X, _, T = grid.axes()
        ref = eval_grid(exact, HYPERCR, (X, np.array([c.y_final]), T), c.params)[:, 0, :]
        diff = np.abs(grid.values[:, -1, :] - ref)
        if x_window is not None:
            diff = diff[np.abs(X) <= x_window + 1e-12]
        errs.append(float(diff.max()))
        hs.append(c.Lx / n)
    return observed_order(hs, errs)


def residual_convergence(kind: str, exact: Expr, chart: Chart, box: Sequence[tuple[float, float]],
                         refinements: Sequence[int], params=None, **kw) -> dict:
    """Fit the order of the interior max residual of a sampled exact solution."""
    hs, errs = [], []
    for n in refinements:
        axes = [np.linspace(lo, hi, n + 1) for lo, hi in box]
        g = GridField(chart, tuple(a[0] for a in axes), tuple(a[1] - a[0] for a in axes),
                      eval_grid(exact, chart, axes, params))
        _, norms = residual_grid(kind, g, **kw)
        hs.append(max(a[1] - a[0] for a in axes))
        errs.append(norms["max"])
    return observed_order(hs, errs)


def manufactured_solution(amplitude: float = 0.1) -> tuple[Expr, Expr, Expr]:
    """``H* = X^2/2 + A sin X sin T Y``, its forcing (the hyper-CR residual of ``H*``),
    and the background ``X^2/2``."""
    Hs = parse_expr(f"X^2/2 + {amplitude!r}*sin(X)*sin(T)*Y")
    f = (Hs.diff("X").diff("T") - Hs.diff("Y").diff("Y") + Hs.diff("Y") * Hs.diff("X").diff("X")
         - Hs.diff("X") * Hs.diff("X").diff("Y"))
    return Hs, f, parse_expr("X^2/2")
