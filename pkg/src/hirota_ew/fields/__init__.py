"""Scalar fields: expression trees, the text parser, and sampled grids."""
from .expr import (Chart, Const, Coord, EvaluationError, Expr, HIROTA, HYPERCR, JetField, Param,
                   as_expr, coords, cos, eval_grid, eval_jet, eval_jets, eval_value, exp, ln,
                   params, partial, sin)
from .grid import GridError, GridField, fd_array, fd_derivative, fd_partial, from_csv, to_csv
from .parser import DEFAULT_COORDINATES, ParseError, parse_expr, to_text

__all__ = [
    "Chart", "Const", "Coord", "EvaluationError", "Expr", "HIROTA", "HYPERCR", "JetField",
    "Param", "as_expr", "coords", "cos", "eval_grid", "eval_jet", "eval_jets", "eval_value",
    "exp", "ln", "params", "partial", "sin", "GridError", "GridField", "fd_array",
    "fd_derivative", "fd_partial", "from_csv", "to_csv", "DEFAULT_COORDINATES", "ParseError",
    "parse_expr", "to_text",
]
