"""Text formats: the ODE system description, equilibrium lists, result JSON.

System grammar (one equation per line, ``#`` starts a comment)::

    line   := IDENT "'" "=" expr
    expr   := ["+"|"-"] term (("+"|"-") term)*
    term   := power ("*" power)*
    power  := atom ["^" INTEGER]
    atom   := NUMBER ["/" NUMBER] | IDENT | "(" expr ")"

``^`` binds tighter than ``*``; unary minus binds loosest.  Numeric literals
(integers, decimals such as ``0.4``, scientific notation, and ``a/b``
rationals) all parse to exact rationals, so an exact-mode analysis is
available end-to-end.  Implicit multiplication is rejected, as are division
by variables and function calls.  Variable order is the order of first
appearance on the left-hand sides.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from typing import Optional, Sequence

from .poly import (
    Monomial,
    Polynomial,
    PolySystem,
    VarTable,
    format_monomial,
    mono_one,
)

SCHEMA_VERSION = 1


class SourceError(ValueError):
    """Parse failure with a 1-based source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class SystemParseError(SourceError):
    pass


class PointParseError(SourceError):
    pass


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#.*)
  | (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*^/()=';,])
    """,
    re.VERBOSE,
)


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text: str, error_cls) -> list[_Token]:
    tokens = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        pos = 0
        while pos < len(line):
            m = _TOKEN_RE.match(line, pos)
            if m is None:
                raise error_cls(f"unexpected character {line[pos]!r}", lineno, pos + 1)
            pos = m.end()
            if m.lastgroup in ("ws", "comment"):
                continue
            kind = m.lastgroup
            tokens.append(_Token(kind, m.group(), lineno, m.start() + 1))
        tokens.append(_Token("eol", "", lineno, len(line) + 1))
    return tokens


class _ExprParser:
    """Recursive-descent parser for one right-hand side expression."""

    def __init__(self, tokens: list[_Token], pos: int, vars: VarTable, error_cls):
        self.tokens = tokens
        self.pos = pos
        self.vars = vars
        self.error_cls = error_cls

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.peek()
        raise self.error_cls(message, tok.line, tok.col)

    def expr(self) -> Polynomial:
        tok = self.peek()
        negate = False
        if tok.kind == "op" and tok.text in "+-":
            self.take()
            negate = tok.text == "-"
        acc = self.term()
        if negate:
            acc = -acc
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                self.take()
                rhs = self.term()
                acc = acc - rhs if tok.text == "-" else acc + rhs
            else:
                return acc

    def term(self) -> Polynomial:
        acc = self.power()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text == "*":
                self.take()
                acc = acc * self.power()
            elif tok.kind == "op" and tok.text == "/":
                self.fail("division is only allowed between numeric literals")
            elif tok.kind in ("ident", "number"):
                self.fail(
                    "implicit multiplication is not supported; use '*'", tok
                )
            else:
                return acc

    def power(self) -> Polynomial:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.take()
            etok = self.peek()
            if etok.kind != "number" or not etok.text.isdigit():
                self.fail("exponent must be a non-negative integer", etok)
            self.take()
            e = int(etok.text)
            out = Polynomial.constant(self.vars, Fraction(1))
            for _ in range(e):
                out = out * base
            return out
        return base

    def atom(self) -> Polynomial:
        tok = self.peek()
        if tok.kind == "number":
            self.take()
            value = Fraction(tok.text)
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "/":
                self.take()
                den = self.peek()
                if den.kind != "number" or not den.text.isdigit():
                    self.fail("denominator must be an integer literal", den)
                self.take()
                if int(den.text) == 0:
                    self.fail("division by zero", den)
                value = value / int(den.text)
            return Polynomial.constant(self.vars, value)
        if tok.kind == "ident":
            self.take()
            try:
                idx = self.vars.index(tok.text)
            except KeyError:
                self.fail(
                    f"unknown identifier {tok.text!r}; not declared on any "
                    "left-hand side",
                    tok,
                )
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                self.fail("function calls are not supported", nxt)
            return Polynomial.variable(self.vars, idx)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            inner = self.expr()
            close = self.peek()
            if not (close.kind == "op" and close.text == ")"):
                self.fail("expected ')'", close)
            self.take()
            return inner
        self.fail(f"expected a number, variable or '(', got {tok.text!r}", tok)


def parse_system(src: str) -> PolySystem:
    """Parse an ODE system description; see the module docstring for grammar."""
    tokens = _tokenize(src, SystemParseError)

    # group tokens into logical lines, dropping empty ones
    lines: list[list[_Token]] = []
    current: list[_Token] = []
    for tok in tokens:
        if tok.kind == "eol":
            if current:
                lines.append(current + [tok])
                current = []
        else:
            current.append(tok)
    if current:
        last = current[-1]
        lines.append(current + [_Token("eol", "", last.line, last.col + len(last.text))])

    names: list[str] = []
    for line in lines:
        head = line[0]
        if head.kind != "ident":
            raise SystemParseError("expected a variable name", head.line, head.col)
        if not (
            len(line) >= 3
            and line[1].kind == "op"
            and line[1].text == "'"
            and line[2].kind == "op"
            and line[2].text == "="
        ):
            tok = line[1] if len(line) > 1 else head
            raise SystemParseError("expected \"'\" and '=' after the variable name",
                                   tok.line, tok.col)
        if head.text in names:
            raise SystemParseError(
                f"duplicate left-hand side {head.text!r}", head.line, head.col
            )
        names.append(head.text)

    if not names:
        raise SystemParseError("empty system description", 1, 1)
    vars = VarTable(names)

    rhs = []
    for line in lines:
        parser = _ExprParser(line, 3, vars, SystemParseError)
        p = parser.expr()
        end = parser.peek()
        if end.kind != "eol":
            raise SystemParseError(
                f"unexpected trailing input {end.text!r}", end.line, end.col
            )
        rhs.append(p)
    return PolySystem(vars, tuple(rhs))


def parse_points(src: str, arity: int) -> list[tuple]:
    """Parse semicolon-separated point tuples like ``(0, 1/2); (3/10, 0.4)``."""
    tokens = _tokenize(src, PointParseError)
    tokens = [t for t in tokens if t.kind != "eol"]
    tokens.append(_Token("end", "", tokens[-1].line if tokens else 1,
                         tokens[-1].col + 1 if tokens else 1))
    pos = 0

    def literal() -> Fraction:
        nonlocal pos
        tok = tokens[pos]
        sign = 1
        if tok.kind == "op" and tok.text in "+-":
            sign = -1 if tok.text == "-" else 1
            pos += 1
            tok = tokens[pos]
        if tok.kind != "number":
            raise PointParseError(
                f"expected a numeric literal, got {tok.text!r}", tok.line, tok.col
            )
        pos += 1
        value = Fraction(tok.text)
        nxt = tokens[pos]
        if nxt.kind == "op" and nxt.text == "/":
            pos += 1
            den = tokens[pos]
            if den.kind != "number" or not den.text.isdigit() or int(den.text) == 0:
                raise PointParseError(
                    "denominator must be a nonzero integer", den.line, den.col
                )
            pos += 1
            value = value / int(den.text)
        return sign * value

    points = []
    while tokens[pos].kind != "end":
        tok = tokens[pos]
        if not (tok.kind == "op" and tok.text == "("):
            raise PointParseError("expected '('", tok.line, tok.col)
        pos += 1
        coords = [literal()]
        while tokens[pos].kind == "op" and tokens[pos].text == ",":
            pos += 1
            coords.append(literal())
        tok = tokens[pos]
        if not (tok.kind == "op" and tok.text == ")"):
            raise PointParseError("expected ')' or ','", tok.line, tok.col)
        pos += 1
        if len(coords) != arity:
            raise PointParseError(
                f"point has {len(coords)} coordinates, expected {arity}",
                tok.line,
                tok.col,
            )
        points.append(tuple(coords))
        if tokens[pos].kind == "op" and tokens[pos].text == ";":
            pos += 1
        elif tokens[pos].kind != "end":
            tok = tokens[pos]
            raise PointParseError("expected ';' between points", tok.line, tok.col)
    if not points:
        raise PointParseError("no points given", 1, 1)
    return points


def serialize_system(sys: PolySystem) -> str:
    """Render a system back into the text format (canonical term order)."""
    lines = [
        f"{name}' = {p.to_string()}" for name, p in zip(sys.vars.names, sys.rhs)
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# result JSON


def coeff_json(c):
    if isinstance(c, Fraction):
        return str(c)
    return float(c)


def point_json(pt) -> list:
    return [coeff_json(c) for c in pt]


def eigen_json(entry) -> dict:
    out = {}
    if entry.eigenvalues is not None:
        if entry.exact:
            out["eigenvalues"] = [str(e) for e in entry.eigenvalues]
            if entry.residual_factor:
                out["residual_factor"] = [str(c) for c in entry.residual_factor]
        else:
            out["eigenvalues"] = [[z.real, z.imag] for z in entry.eigenvalues]
    if entry.routh_first_column is not None:
        out["routh_first_column"] = [str(c) for c in entry.routh_first_column]
    return out


def quadratization_json(result) -> dict:
    """JSON-ready dictionary for a QuadratizationResult."""
    names = result.ext_vars.names
    n = len(result.system.vars)
    new_vars = [
        f"{names[n + j]} = {format_monomial(g, result.system.vars.names)}"
        for j, g in enumerate(result.new_vars)
    ]
    equations = [
        f"{names[i]}' = {q.to_string()}" for i, q in enumerate(result.q1)
    ]
    equations += [
        f"{names[n + j]}' = {q.to_string()}" for j, q in enumerate(result.q2)
    ]
    stabilizers = [
        f"{names[n + j]} - {format_monomial(_pair_monomial(pair, names), names)}"
        for j, pair in enumerate(result.stabilizer_pairs)
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "variables": list(result.system.vars.names),
        "new_variables": new_vars,
        "equations": equations,
        "stabilizers": stabilizers,
    }


def _pair_monomial(pair, names) -> Monomial:
    m = [0] * len(names)
    for idx in pair:
        m[idx] += 1
    return tuple(m)


def report_json(report) -> dict:
    doc = {
        "check_mode": report.mode,
        "lambda": coeff_json(report.lam),
        "equilibria": [],
        "iterations": [],
    }
    for entry in report.equilibria:
        item = {"point": point_json(entry.point)}
        if entry.lifted_point is not None:
            item["lifted_point"] = point_json(entry.lifted_point)
        item["verdict"] = entry.verdict
        item.update(eigen_json(entry))
        doc["equilibria"].append(item)
    for it in report.iterations:
        row = {"lambda": coeff_json(it.lam), "points": []}
        for entry in it.checks:
            item = {
                "point": point_json(entry.point),
                "verdict": entry.verdict,
            }
            item.update(eigen_json(entry))
            row["points"].append(item)
        doc["iterations"].append(row)
    return doc


def serialize_result(result, report=None, indent: int = 2) -> str:
    """Serialize a quadratization (and optional stability report) to JSON.

    Key order is fixed; exact rationals are rendered as "p/q" strings so no
    precision is lost.  The output is byte-stable for exact-mode runs.
    """
    doc = quadratization_json(result)
    if report is not None:
        doc.update(report_json(report))
    return json.dumps(doc, indent=indent, allow_nan=False)
