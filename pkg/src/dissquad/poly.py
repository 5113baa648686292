"""Sparse multivariate polynomials over exact rationals, with a float shadow mode.

Monomials are plain exponent tuples (one entry per variable of the owning
VarTable); the zero tuple is the monomial 1.  A polynomial is a sparse map
from monomials to nonzero coefficients, all of one kind: ``Fraction`` for
exact arithmetic or ``float`` for the numeric shadow.  Everything here is an
immutable value and a pure function, so results can be shared freely across
threads.

The canonical monomial order used for printing and for all deterministic
tie-breaking is graded: smaller total degree first, and within a degree the
exponent tuples are compared right-to-left, so for variables (x, y) the
order is  1 < x < y < x^2 < x*y < y^2 < ...
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence, Union

Monomial = tuple[int, ...]
Coefficient = Union[Fraction, float]
Point = tuple


class StructureError(ValueError):
    """Operands disagree on variables or coefficient kind."""


# ---------------------------------------------------------------------------
# monomial helpers


def mono_one(nvars: int) -> Monomial:
    return (0,) * nvars


def mono_degree(m: Monomial) -> int:
    return sum(m)


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


def mono_divides(a: Monomial, b: Monomial) -> bool:
    """Componentwise a <= b, i.e. the monomial a divides b."""
    return all(x <= y for x, y in zip(a, b))


def mono_div(a: Monomial, b: Monomial) -> Monomial:
    """a / b; requires b | a."""
    if not mono_divides(b, a):
        raise ValueError(f"{b} does not divide {a}")
    return tuple(x - y for x, y in zip(a, b))


def mono_key(m: Monomial):
    """Canonical sort key: graded, then right-to-left lexicographic."""
    return (sum(m), tuple(reversed(m)))


def mono_divisors(m: Monomial) -> Iterator[Monomial]:
    """All componentwise divisors of m, including 1 and m itself."""
    return itertools.product(*(range(e + 1) for e in m))


def unordered_decompositions(
    m: Monomial, allow_unit: bool = True
) -> list[tuple[Monomial, Monomial]]:
    """All unordered factorizations m = m1 * m2 into two monomials.

    With ``allow_unit=False`` pairs containing the monomial 1 are dropped.
    Pairs are normalized so that m1 <= m2 in the canonical order and the
    list is sorted by m1 (then m2).
    """
    if mono_degree(m) == 0:
        raise ValueError("the monomial 1 has no proper decompositions")
    seen = set()
    out = []
    for d in mono_divisors(m):
        rest = tuple(e - f for e, f in zip(m, d))
        pair = (d, rest) if mono_key(d) <= mono_key(rest) else (rest, d)
        if pair in seen:
            continue
        seen.add(pair)
        if not allow_unit and mono_degree(pair[0]) == 0:
            continue
        out.append(pair)
    out.sort(key=lambda p: (mono_key(p[0]), mono_key(p[1])))
    return out


# ---------------------------------------------------------------------------
# variables


class VarTable:
    """Ordered table of distinct variable names."""

    __slots__ = ("names", "_index")

    def __init__(self, names: Sequence[str]):
        names = tuple(names)
        if any(not n for n in names):
            raise StructureError("variable names must be non-empty")
        if len(set(names)) != len(names):
            raise StructureError(f"duplicate variable names in {names}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def __setattr__(self, *a):  # immutable by convention
        raise AttributeError("VarTable is immutable")

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, VarTable) and self.names == other.names

    def __hash__(self) -> int:
        return hash(self.names)

    def __repr__(self) -> str:
        return f"VarTable({list(self.names)})"

    def index(self, name: str) -> int:
        return self._index[name]

    def extended(self, extra: Sequence[str]) -> "VarTable":
        return VarTable(self.names + tuple(extra))

    def fresh_names(self, count: int) -> tuple[str, ...]:
        """Generate ``count`` new-variable names that do not clash."""
        for prefix in ("y", "w", "u", "v"):
            cand = tuple(f"{prefix}{i}" for i in range(1, count + 1))
            if not set(cand) & set(self.names):
                return cand
        return tuple(f"aux{i}" for i in range(1, count + 1))


def format_monomial(m: Monomial, names: Sequence[str]) -> str:
    parts = []
    for e, n in zip(m, names):
        if e == 1:
            parts.append(n)
        elif e > 1:
            parts.append(f"{n}^{e}")
    return "*".join(parts) if parts else "1"


def _coeff_str(c: Coefficient) -> str:
    if isinstance(c, Fraction):
        return str(c)
    return repr(c)


# ---------------------------------------------------------------------------
# polynomials


class Polynomial:
    """Sparse polynomial; ``terms`` maps monomials to nonzero coefficients."""

    __slots__ = ("vars", "terms")

    def __init__(self, vars: VarTable, terms: dict):
        n = len(vars)
        clean = {}
        for m, c in terms.items():
            if len(m) != n:
                raise StructureError(f"monomial {m} does not fit {n} variables")
            if any(e < 0 for e in m):
                raise StructureError(f"negative exponent in {m}")
            if c != 0:
                clean[m] = c
        kinds = {type(c) is float for c in clean.values()}
        if len(kinds) > 1:
            raise StructureError("mixed exact and float coefficients")
        object.__setattr__(self, "vars", vars)
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, *a):
        raise AttributeError("Polynomial is immutable")

    # constructors ---------------------------------------------------------

    @classmethod
    def zero(cls, vars: VarTable) -> "Polynomial":
        return cls(vars, {})

    @classmethod
    def constant(cls, vars: VarTable, c: Coefficient) -> "Polynomial":
        return cls(vars, {mono_one(len(vars)): c})

    @classmethod
    def variable(cls, vars: VarTable, i: int) -> "Polynomial":
        m = tuple(1 if j == i else 0 for j in range(len(vars)))
        return cls(vars, {m: Fraction(1)})

    @classmethod
    def from_monomial(
        cls, vars: VarTable, m: Monomial, c: Coefficient = Fraction(1)
    ) -> "Polynomial":
        return cls(vars, {m: c})

    # basic queries --------------------------------------------------------

    @property
    def kind(self) -> str:
        for c in self.terms.values():
            return "float" if type(c) is float else "exact"
        return "exact"

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        if not self.terms:
            return -1
        return max(mono_degree(m) for m in self.terms)

    def degree_in(self, i: int) -> int:
        """Largest exponent of variable i (0 for the zero polynomial)."""
        return max((m[i] for m in self.terms), default=0)

    def support(self) -> frozenset:
        return frozenset(self.terms)

    def coefficient(self, m: Monomial) -> Coefficient:
        return self.terms.get(m, Fraction(0))

    def _check(self, other: "Polynomial") -> None:
        if self.vars != other.vars:
            raise StructureError("polynomials over different variable tables")
        if self.terms and other.terms and self.kind != other.kind:
            raise StructureError("mixed exact and float polynomials")

    # ring operations ------------------------------------------------------

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0) + c
        return Polynomial(self.vars, terms)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.vars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        terms: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = mono_mul(m1, m2)
                terms[m] = terms.get(m, 0) + c1 * c2
        return Polynomial(self.vars, terms)

    def scale(self, c: Coefficient) -> "Polynomial":
        if c == 0:
            return Polynomial.zero(self.vars)
        return Polynomial(self.vars, {m: v * c for m, v in self.terms.items()})

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.vars == other.vars
            and self.terms == other.terms
        )

    # calculus and evaluation ----------------------------------------------

    def diff(self, i: int) -> "Polynomial":
        """Formal partial derivative with respect to variable i."""
        if not 0 <= i < len(self.vars):
            raise IndexError(f"variable index {i} out of range")
        terms: dict = {}
        for m, c in self.terms.items():
            e = m[i]
            if e == 0:
                continue
            dm = m[:i] + (e - 1,) + m[i + 1 :]
            terms[dm] = terms.get(dm, 0) + c * e
        return Polynomial(self.vars, terms)

    def evaluate(self, point: Sequence[Coefficient]) -> Coefficient:
        if len(point) != len(self.vars):
            raise StructureError(
                f"point of length {len(point)} for {len(self.vars)} variables"
            )
        total = None
        for m, c in self.terms.items():
            v = c
            for x, e in zip(point, m):
                if e:
                    v = v * x**e
            total = v if total is None else total + v
        if total is None:
            return 0.0 if self.kind == "float" else Fraction(0)
        return total

    def substitute(self, images: Sequence["Polynomial"]) -> "Polynomial":
        """Substitute variable i by ``images[i]`` (all over one target table)."""
        if len(images) != len(self.vars):
            raise StructureError("need one image polynomial per variable")
        target = images[0].vars if images else self.vars
        result = Polynomial.zero(target)
        for m, c in self.terms.items():
            term = Polynomial.constant(target, c)
            for img, e in zip(images, m):
                for _ in range(e):
                    term = term * img
            result = result + term
        return result

    # conversions and printing ---------------------------------------------

    def to_float(self) -> "Polynomial":
        return Polynomial(self.vars, {m: float(c) for m, c in self.terms.items()})

    def sorted_terms(self) -> list[tuple[Monomial, Coefficient]]:
        return sorted(self.terms.items(), key=lambda t: mono_key(t[0]))

    def to_string(self) -> str:
        """Canonical form, terms in ascending graded order."""
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            mono = format_monomial(m, self.vars.names)
            if mono == "1":
                body = _coeff_str(abs(c) if isinstance(c, Fraction) else abs(c))
            elif abs(c) == 1 and isinstance(c, Fraction):
                body = mono
            else:
                body = f"{_coeff_str(abs(c))}*{mono}"
            if not parts:
                parts.append(body if c > 0 else f"-{body}")
            else:
                parts.append(f"+ {body}" if c > 0 else f"- {body}")
        return " ".join(parts)

    def __str__(self) -> str:
        return self.to_string()

    def __repr__(self) -> str:
        return f"Polynomial({self.to_string()!r})"


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class PolySystem:
    """Polynomial ODE system x' = p(x): one right-hand side per variable."""

    vars: VarTable
    rhs: tuple

    def __post_init__(self):
        if len(self.rhs) != len(self.vars):
            raise StructureError(
                f"{len(self.rhs)} equations for {len(self.vars)} variables"
            )
        kinds = set()
        for p in self.rhs:
            if p.vars != self.vars:
                raise StructureError("equation over a different variable table")
            if p.terms:
                kinds.add(p.kind)
        if len(kinds) > 1:
            raise StructureError("mixed exact and float equations")

    @property
    def kind(self) -> str:
        for p in self.rhs:
            if p.terms:
                return p.kind
        return "exact"

    def max_degree(self) -> int:
        return max((p.degree() for p in self.rhs), default=-1)

    def to_float(self) -> "PolySystem":
        return PolySystem(self.vars, tuple(p.to_float() for p in self.rhs))


def lie_derivative(g: Polynomial, sys: PolySystem) -> Polynomial:
    """Time derivative of g along trajectories: sum_j (dg/dx_j) * p_j."""
    if g.vars != sys.vars:
        raise StructureError("g is not over the system's variables")
    out = Polynomial.zero(sys.vars)
    for j in range(len(sys.vars)):
        dg = g.diff(j)
        if not dg.is_zero():
            out = out + dg * sys.rhs[j]
    return out
