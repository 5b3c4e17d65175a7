"""Command-line front end: ``hirota-ew <command> [options]``.

Every command writes a JSON report
``{command, params, seed, conventions_digest, checks, results, timestamp}``
and exits with 0 when all checks pass, 1 when a check fails and 2 on
invalid input.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import conventions
from .fields import (EvaluationError, GridError, HIROTA, HYPERCR, ParseError, eval_jets,
                     parse_expr, to_csv)
from .geometry import (GeometryError, build_hirota_weyl, curvature, hirota_extension,
                       hirota_gauge, jones_tod_reduce)
from .jets import DegenerateJetError, JetError

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
DEGENERATE_GRADIENT = 1e-6


class InputError(Exception):
    """Invalid user input; reported with exit code 2."""


# -- helpers -------------------------------------------------------------------------

def _check(name: str, residual: float, tol: float) -> dict:
    residual = float(residual)
    return {"name": name, "max_residual": residual, "tolerance": float(tol),
            "pass": bool(math.isfinite(residual) and residual <= tol)}


def _parse_params(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"parameter binding {item!r} is not of the form name=value")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError as exc:
            raise InputError(f"parameter {k!r} has non-numeric value {v!r}") from exc
    return out


def _expr(text: str, chart, params: dict):
    e = parse_expr(text, coordinates=chart.names, parameters=params)
    unbound = e.parameters(chart) - set(params)
    if unbound:
        raise InputError(f"unbound parameter(s): {', '.join(sorted(unbound))}")
    return e


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise InputError(f"expected {n} numbers, got {len(vals)}")
    return vals


def _box(text: str, n: int) -> list[tuple[float, float]]:
    parts = text.split(",")
    if len(parts) != n:
        raise InputError(f"box needs {n} ranges lo:hi")
    out = []
    for p in parts:
        lo, hi = (float(v) for v in p.split(":"))
        if not hi > lo:
            raise InputError("box ranges must have hi > lo")
        out.append((lo, hi))
    return out


def sample_points(w, chart, params, box, n: int, rng: np.random.Generator,
                  max_tries: int = 10000) -> list[tuple[float, ...]]:
    """Uniform points in ``box`` with ``|d_i w| >= 1e-6`` for every coordinate."""
    pts: list[tuple[float, ...]] = []
    tries = 0
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    while len(pts) < n:
        tries += 1
        if tries > max_tries:
            raise InputError("could not find admissible points in the box")
        p = tuple(float(v) for v in rng.uniform(lo, hi))
        try:
            g = eval_jets([w], chart, p, 1, params)[0].gradient()
        except (DegenerateJetError, ValueError, ZeroDivisionError):
            continue
        if np.all(np.isfinite(g)) and np.all(np.abs(g) >= DEGENERATE_GRADIENT):
            pts.append(p)
    return pts


def _hirota_common(args):
    params = _parse_params(args.param)
    w = _expr(args.w, HIROTA, params)
    if args.a == args.b or args.a == 0 or args.b == 0:
        raise InputError("a and b must be distinct and nonzero")
    rng = np.random.default_rng(args.seed)
    pts = []
    if args.at:
        pts.append(tuple(_floats(args.at, 3)))
    pts += sample_points(w, HIROTA, params, _box(args.box, 3), args.points, rng)
    return params, w, pts


# -- commands ------------------------------------------------------------------------

def cmd_verify_ew(args):
    params, w, pts = _hirota_common(args)
    W = build_hirota_weyl(w, args.a, args.b, params)
    norms = [curvature(W, p).norm for p in pts]
    worst = int(np.argmax(norms))
    return [_check("einstein_weyl_residual", max(norms), args.tol)], \
        {"points": len(pts), "worst_point": list(pts[worst]), "E_norms": norms}


def cmd_verify_jacobi(args):
    from .laxweb import hirota_lax
    from .poisson import jacobiator, jacobiator_components, jacobiator_sweep, pencil_from_lax, \
        write_jacobiator_csv
    params, w, pts = _hirota_common(args)
    pencil = pencil_from_lax(*hirota_lax(w, args.a, args.b, params))
    lams = _floats(args.lam)
    full = [tuple(p) + (0.0, 0.0) for p in pts]
    rows = jacobiator_sweep(pencil, full, lams)
    results = {"max_J": max(r["maxJ"] for r in rows)}
    comps = jacobiator_components(jacobiator(pencil, full[0], lams[0]), pencil.chart.names)
    results["components_at_first_point"] = {"point": list(pts[0]), "lambda": lams[0],
                                            "J": comps}
    if args.csv:
        write_jacobiator_csv(rows, args.csv)
    return [_check("jacobiator", results["max_J"], args.tol)], results


def cmd_lax_commutator(args):
    from .laxweb import (commutator, hirota_lax, hirota_residual, hypercr_lax, hypercr_residual,
                         residual_sweep, write_residual_csv)
    lams = _floats(args.lam)
    if args.H:
        params = _parse_params(args.param)
        H = _expr(args.H, HYPERCR, params)
        L0, L1 = hypercr_lax(H, params)
        rng = np.random.default_rng(args.seed)
        pts = [tuple(rng.uniform(-1, 1, 3)) for _ in range(args.points)]
        # [L0, L1] = lam^2 rho d_X
        slot, rho = 2, [hypercr_residual(H, p, params) for p in pts]
    else:
        if args.w is None:
            raise InputError("give --w (Hirota) or --H (hyper-CR)")
        params, w, pts = _hirota_common(args)
        L0, L1 = hirota_lax(w, args.a, args.b, params)
        # [L0, L1] = lam (rho / w_x^2) d_x
        slot = 1
        rho = [hirota_residual(w, args.a, args.b, p, params)
               / eval_jets([w], HIROTA, p, 1, params)[0].partial(0) ** 2 for p in pts]
    ident = 0.0
    for p, r in zip(pts, rho):
        C = commutator(L0, L1, p)
        C[slot, 0] -= r
        ident = max(ident, float(np.abs(C).max()))
    rows = residual_sweep(L0, L1, pts, lams)
    if args.csv:
        write_residual_csv(rows, args.csv, L0.chart.names)
    vanish = max((r["residual"] for r in rows), default=0.0)
    return [_check("commutator_identity", ident, args.tol),
            _check("commutator_vanishes", vanish, args.tol)], {"points": len(pts)}


def cmd_veronese_check(args):
    from .laxweb import (hirota_lax, lax_plane, span_compare, veronese_eval, veronese_fields,
                         veronese_plane)
    params, w, pts = _hirota_common(args)
    vt = veronese_fields(w, args.a, args.b, params)
    W = build_hirota_weyl(w, args.a, args.b, params)
    L0, L1 = hirota_lax(w, args.a, args.b, params)
    lams = _floats(args.lam)
    null, orth, rank_bad = 0.0, 0.0, 0
    for p in pts:
        h = W.metric(p)
        for lam in lams:
            V = veronese_eval(vt, lam, p)
            Vp = veronese_plane(vt, lam, p)
            scale = float(np.linalg.norm(V) ** 2 * np.abs(h).max())
            null = max(null, abs(V @ h @ V) / scale)
            orth = max(orth, max(abs(V @ h @ Vp[0]), abs(V @ h @ Vp[1])) / scale)
            if lam != 0:
                mu = conventions.lax_to_veronese(lam)
                if span_compare(lax_plane(L0, L1, p, lam), veronese_plane(vt, mu, p)) != 2:
                    rank_bad += 1
    return [_check("veronese_null", null, args.tol), _check("veronese_orthogonal", orth, args.tol),
            _check("lax_plane_matches_veronese_plane", float(rank_bad), 0.0)], \
        {"mobius": conventions.LAX_TO_VERONESE_MOBIUS}


def cmd_jones_tod(args):
    params, w, pts = _hirota_common(args)
    R = hirota_gauge(jones_tod_reduce(hirota_extension(w, args.a, args.b, params)), w)
    W = build_hirota_weyl(w, args.a, args.b, params)
    dh = max(float(np.abs(R.metric(p) - W.metric(p)).max()) for p in pts)
    dw = max(float(np.abs(R.one_form(p) - W.one_form(p)).max()) for p in pts)
    return [_check("metric_in_gauge_orbit", dh, args.tol),
            _check("weyl_form_in_gauge_orbit", dw, args.tol)], \
        {"metric_factor": conventions.JONES_TOD_METRIC_FACTOR}


def cmd_solve_hypercr(args):
    from .pdesolve import SolverConfig, SolverError, solve_from_config
    keys = ("nx", "nt", "Lx", "Lt", "y_final", "steps", "init_H", "init_G", "forcing",
            "background", "y_cap")
    cfg = SolverConfig(**{k: getattr(args, k) for k in keys}, params=_parse_params(args.param))
    try:
        grid, rep = solve_from_config(cfg)
    except SolverError as exc:
        raise InputError(str(exc)) from exc
    checks = [_check("no_blow_up", 1.0 if rep.blow_up else 0.0, 0.0)]
    results = {"report": json.loads(rep.to_json())}
    results["report"].pop("wall_time")
    if args.exact:
        ex = _expr(args.exact, HYPERCR, cfg.params)
        from .fields import eval_grid
        err = np.abs(grid.values - eval_grid(ex, HYPERCR, grid.axes(), cfg.params))
        if args.x_window is not None:
            err = err[np.abs(grid.axes()[0]) <= args.x_window]
        checks.append(_check("error_vs_exact", float(err.max()), args.tol))
    if args.csv:
        to_csv(grid, args.csv)
    return checks, results


def cmd_twistor_recursion(args):
    from .twistor import twistor_series, verify_wave
    params = _parse_params(args.param)
    H = _expr(args.H, HYPERCR, params)
    # run to the end regardless and let the check judge the defect
    ts = twistor_series(H, args.terms, args.order, params, tol=math.inf)
    rng = np.random.default_rng(args.seed)
    pts = [tuple(rng.uniform(-0.5, 0.5, 3)) for _ in range(args.points)]
    wave = max(abs(verify_wave(ts, i, p)) for i in range(len(ts.coeffs)) for p in pts)
    return [_check("recursion_consistency", max(ts.consistency), args.tol),
            _check("wave_equation", wave, args.tol)], \
        {"psi_at_points": [[ts.value(i, p) for i in range(len(ts.coeffs))] for p in pts]}


def cmd_deform(args):
    from .twistor import (CURVE_CHART, DEFORM_CHART, CurveFamily, DeformationGenerator,
                          TwistorError, curve_family_from_json, extract_coordinates,
                          homogeneity_error, kodaira_deform)
    params = _parse_params(args.param)
    if args.family:
        try:
            cf = curve_family_from_json(Path(args.family).read_text())
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read curve family: {exc}") from exc
    else:
        cf = CurveFamily(_expr(args.psi, CURVE_CHART, params), params)
    gen = DeformationGenerator(_expr(args.f, DEFORM_CHART, params),
                               _expr(args.g, DEFORM_CHART, params), params)
    hom = homogeneity_error(gen)
    checks = [_check("homogeneity", hom, 1e-10)]
    if hom > 1e-10:
        return checks, {}
    try:
        out = kodaira_deform(cf, gen, args.eps, args.steps)
    except TwistorError as exc:
        return checks + [_check("integration", float("inf"), 0.0)], {"error": str(exc)}
    rng = np.random.default_rng(args.seed)
    ms = [tuple(rng.uniform(-0.5, 0.5, 3)) for _ in range(args.points)]
    res = [abs(extract_coordinates(out, m).residual) for m in ms]
    checks.append(_check("extracted_hypercr_residual", max(res), args.tol))
    results = {"samples": [{"m": list(m), "residual": r} for m, r in zip(ms, res)]}
    if args.closed_form:
        cfe = _expr(args.closed_form, CURVE_CHART, params)
        pts = [tuple(rng.uniform(-0.5, 0.5, 3)) + (float(rng.uniform(-1, 1)),)
               for _ in range(args.points)]
        err = max(abs(out.value(p[:3], p[3]) - eval_jets([cfe], CURVE_CHART, p, 0, params)[0].value)
                  for p in pts)
        checks.append(_check("closed_form", err, 1e-10))
    return checks, results


def cmd_heisenberg(args):
    from .twistor import heisenberg_pipeline
    if args.eps == 0 or args.a == 0 or args.a == args.b or args.b == 0:
        raise InputError("need eps != 0, a, b nonzero and a != b")
    rep = heisenberg_pipeline(args.eps, args.a, args.b, args.points, args.seed)
    return rep["checks"], {"lambda4": rep["lambda4"], "w": rep["w"], "rescaling": rep["rescaling"],
                           "lie_sign": rep["lie_sign"]}


def cmd_hierarchy_check(args):
    from .laxweb import HierarchySpec, hierarchy_residual, hirota_residual
    params = _parse_params(args.param)
    try:
        spec = HierarchySpec(tuple(_floats(args.constants)))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    w = _expr(args.w, spec.chart, params)
    rng = np.random.default_rng(args.seed)
    n = len(spec.constants)
    pts = [tuple(rng.uniform(-0.5, 0.5, n + 1)) for _ in range(args.points)]
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            worst = max(worst, max(abs(hierarchy_residual(w, spec, i, j, p, params)) for p in pts))
    return [_check("hierarchy_residual", worst, args.tol)], {"pairs": n * (n - 1) // 2}


def cmd_eform_check(args):
    from .laxweb import hirota_lax
    from .poisson import conformal_at, e_wedge_de, eform, pencil_from_lax, ratio_spread
    params, w, pts = _hirota_common(args)
    L0, L1 = hirota_lax(w, args.a, args.b, params)
    ef = eform(pencil_from_lax(L0, L1))
    W = build_hirota_weyl(w, args.a, args.b, params)
    lams = _floats(args.lam)
    ann, ede, spread = 0.0, 0.0, 0.0
    for p in pts:
        q = tuple(p) + (0.0, 0.0)
        for lam in lams:
            e = ef.at(q, lam)
            ann = max(ann, abs(e[:3] @ L0.at(p, lam)), abs(e[:3] @ L1.at(p, lam)), *np.abs(e[3:]))
            ede = max(ede, e_wedge_de(ef, q, lam))
        spread = max(spread, ratio_spread(conformal_at(ef, q), W.metric(p)))
    return [_check("e_annihilates_lax", ann, args.tol), _check("e_wedge_de", ede, args.tol),
            _check("conformal_ratio_spread", spread, 1e-8)], {}


# -- argument parsing ----------------------------------------------------------------

COMMANDS: dict[str, Callable] = {
    "verify-ew": cmd_verify_ew,
    "verify-jacobi": cmd_verify_jacobi,
    "lax-commutator": cmd_lax_commutator,
    "veronese-check": cmd_veronese_check,
    "jones-tod": cmd_jones_tod,
    "solve-hypercr": cmd_solve_hypercr,
    "twistor-recursion": cmd_twistor_recursion,
    "deform": cmd_deform,
    "heisenberg": cmd_heisenberg,
    "hierarchy-check": cmd_hierarchy_check,
    "eform-check": cmd_eform_check,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with option values (keys are option names)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--points", type=int, default=20)
    common.add_argument("--param", action="append", default=[], metavar="NAME=VALUE")
    common.add_argument("--out", help="write the JSON report here instead of stdout")

    hirota = _Parser(add_help=False)
    hirota.add_argument("--w", help="w(x, y, z)")
    hirota.add_argument("--a", type=float, default=1.0)
    hirota.add_argument("--b", type=float, default=2.0)
    hirota.add_argument("--box", default="0.2:1.2,0.2:1.2,0.2:1.2", help="lo:hi for x, y, z")
    hirota.add_argument("--at", default="1,1,1", help="extra fixed point, empty to skip")

    p = _Parser(prog="hirota-ew", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, parents, tol, **kw):
        sp = sub.add_parser(name, parents=parents, **kw)
        sp.add_argument("--tol", type=float, default=tol)
        return sp

    add("verify-ew", [common, hirota], 1e-9)
    sp = add("verify-jacobi", [common, hirota], 1e-10)
    sp.add_argument("--lambda", dest="lam", default="0,1,-1,3")
    sp.add_argument("--csv")
    sp = add("lax-commutator", [common, hirota], 1e-10)
    sp.add_argument("--H", help="hyper-CR H(X, Y, T) instead of --w")
    sp.add_argument("--lambda", dest="lam", default="0,1,-1,2")
    sp.add_argument("--csv")
    sp = add("veronese-check", [common, hirota], 1e-11)
    sp.add_argument("--lambda", dest="lam", default="0,1,-1,2,5")
    add("jones-tod", [common, hirota], 1e-10)
    sp = add("solve-hypercr", [common], 1e-3)
    sp.add_argument("--nx", type=int, default=64)
    sp.add_argument("--nt", type=int, default=64)
    sp.add_argument("--Lx", type=float, default=2 * math.pi)
    sp.add_argument("--Lt", type=float, default=2 * math.pi)
    sp.add_argument("--y-final", dest="y_final", type=float, default=0.2)
    sp.add_argument("--steps", type=int, default=52)
    sp.add_argument("--init-H", dest="init_H", default="0")
    sp.add_argument("--init-G", dest="init_G", default="0")
    sp.add_argument("--forcing", default=None)
    sp.add_argument("--background", default=None)
    sp.add_argument("--y-cap", dest="y_cap", type=float, default=1.0)
    sp.add_argument("--exact", default=None, help="closed-form H to compare against")
    sp.add_argument("--x-window", dest="x_window", type=float, default=None)
    sp.add_argument("--csv")
    sp = add("twistor-recursion", [common], 1e-10)
    sp.add_argument("--H", required=True)
    sp.add_argument("--terms", type=int, default=5)
    sp.add_argument("--order", type=int, default=10)
    sp = add("deform", [common], 1e-6)
    sp.add_argument("--family", help='JSON file {"psi": ..., "params": {...}}')
    sp.add_argument("--psi", default="m0 + l*m1 + l^2*m2")
    sp.add_argument("--f", default="psi^2")
    sp.add_argument("--g", default="0")
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--steps", type=int, default=40)
    sp.add_argument("--closed-form", dest="closed_form", default=None,
                    help="expected deformed psi in m0, m1, m2, l")
    sp = add("heisenberg", [common], 1e-10)
    sp.add_argument("--eps", type=float, default=1.0)
    sp.add_argument("--a", type=float, default=1.0)
    sp.add_argument("--b", type=float, default=2.0)
    sp = add("hierarchy-check", [common], 1e-12)
    sp.add_argument("--w", required=True)
    sp.add_argument("--constants", default="1,2,3")
    add("eform-check", [common, hirota], 1e-10).add_argument("--lambda", dest="lam",
                                                              default="0,1,-1,2")
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        data = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError("config must be a JSON object")
    if data.get("command", args.command) != args.command:
        raise InputError("config command does not match the subcommand")
    data.pop("command", None)
    unknown = [k for k in data if not hasattr(args, k)]
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
    # config values become defaults, so explicit flags still win
    sub_parser = parser._subparsers._group_actions[0].choices[args.command]
    sub_parser.set_defaults(**data)
    return parser.parse_args(argv)


def _validate(args) -> None:
    if hasattr(args, "tol") and not args.tol > 0:
        raise InputError("--tol must be positive")
    if args.points < 1:
        raise InputError("--points must be at least 1")


def _params_for_report(args) -> dict:
    skip = {"command", "out", "config", "seed"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        out[k] = v
    return out


def run(argv: list[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        _validate(args)
        checks, results = COMMANDS[args.command](args)
    except (InputError, ParseError, EvaluationError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GeometryError, JetError, DegenerateJetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = {
        "command": args.command,
        "params": _params_for_report(args),
        "seed": args.seed,
        "conventions_digest": conventions.digest(),
        "checks": checks,
        "results": results,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    text = json.dumps(report, indent=2, sort_keys=True, default=float)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text, file=stdout)
    return EXIT_OK if all(c["pass"] for c in checks) else EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
