"""Recursive-descent parser and printer for field expressions.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom (("^" | "**") ["-"] INT)?
    atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

Functions are ``exp``, ``ln`` (alias ``log``), ``sin`` and ``cos``.  Powers
must be integer literals.
"""
from __future__ import annotations

import re
from typing import Iterable

from .expr import (Add, Binary, Const, Coord, Div, Expr, FUNCTIONS, IntPow, Mul, Neg,
                   Param, Sub, Symbol, Unary)

#: Names treated as coordinates when the caller does not say otherwise.
DEFAULT_COORDINATES = frozenset(
    ["x", "y", "z", "X", "Y", "T", "tau", "p0", "p1", "m0", "m1", "m2", "l",
     "psi", "pi0", "pi1"] + [f"x{i}" for i in range(8)]
)

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos:].lstrip()[:1]!r}",
                             pos + len(text[pos:]) - len(text[pos:].lstrip()))
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, coordinates, known):
        self.toks = _tokenize(text)
        self.i = 0
        self.coordinates = coordinates
        self.known = known

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r} but found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            self.take()
            inner = self.unary()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Neg(inner)
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            kind, text, pos = self.take()
            if kind != "num" or not re.fullmatch(r"\d+", text):
                raise ParseError("exponent must be an integer literal", pos)
            return IntPow(base, sign * int(text))
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if self.peek()[1] == "(":
                fname = "ln" if text == "log" else text
                if fname not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", pos)
                self.take("(")
                arg = self.expr()
                self.take(")")
                return FUNCTIONS[fname](arg)
            if text in FUNCTIONS or text == "log":
                raise ParseError(f"function {text!r} needs an argument", pos)
            if self.known is not None and text not in self.known:
                raise ParseError(f"unknown identifier {text!r}", pos)
            return Coord(text) if text in self.coordinates else Param(text)
        if text == "(":
            node = self.expr()
            self.take(")")
            return node
        raise ParseError(f"unexpected {text or 'end of input'!r}", pos)


def parse_expr(text: str, coordinates: Iterable[str] | None = None,
               parameters: Iterable[str] | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    Identifiers listed in ``coordinates`` become coordinate nodes, all others
    parameters.  When ``parameters`` is given as well, any identifier in
    neither set is rejected.
    """
    coord_set = frozenset(coordinates) if coordinates is not None else DEFAULT_COORDINATES
    known = None
    if parameters is not None:
        known = coord_set | frozenset(parameters)
    p = _Parser(text, coord_set, known)
    node = p.expr()
    kind, tok, pos = p.peek()
    if kind != "end":
        raise ParseError(f"unexpected trailing {tok!r}", pos)
    return node


# -- printing ----------------------------------------------------------------------

def _fmt_const(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _prec(e: Expr) -> int:
    if isinstance(e, Const) and e.value < 0:
        return 3  # prints with a leading minus
    return e.prec


def to_text(e: Expr) -> str:
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Symbol):
        return e.name
    if isinstance(e, Binary):
        op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
        left = to_text(e.a)
        if _prec(e.a) < e.prec:
            left = f"({left})"
        right = to_text(e.b)
        # right operand of - and / also needs parens at equal precedence
        if _prec(e.b) < e.prec or (_prec(e.b) == e.prec and not isinstance(e, (Add, Mul))) \
                or (_prec(e.b) == e.prec and isinstance(e.b, (Sub, Div))):
            right = f"({right})"
        sep = f" {op} " if e.prec == 1 else op
        return f"{left}{sep}{right}"
    if isinstance(e, Neg):
        inner = to_text(e.a)
        if _prec(e.a) < 4:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, IntPow):
        base = to_text(e.a)
        if _prec(e.a) <= 4:
            base = f"({base})"
        return f"{base}^{e.k}"
    if isinstance(e, Unary):
        return f"{e.fname}({to_text(e.a)})"
    raise TypeError(f"cannot print {type(e).__name__}")
