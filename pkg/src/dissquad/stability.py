"""Dissipativity checks and the stabilizer repair loop.

For an inner-quadratic quadratization with new variables y_i = a_i * b_i
(states and earlier new variables only), the stabilizers h_i = y_i - a_i*b_i
vanish identically on the lift manifold, so subtracting lambda * h from the
y right-hand sides never changes trajectories.  Doubling lambda from the
schedule 0, 1, 2, 4, ... eventually makes the lifted system dissipative at
every lifted equilibrium of a dissipative original equilibrium; the loop
returns the first lambda that passes.

Two verification backends are provided: exact Routh-Hurwitz on the
characteristic polynomial (rational arithmetic end-to-end) and numeric
eigenvalues with a residual-checked contract.
"""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .poly import Polynomial, PolySystem, StructureError
from .quadratize import (
    DeadlineExceededError,
    QuadratizationResult,
    branch_and_bound,
)

Matrix = list  # list of row lists, square

MODE_EXACT = "exact-hurwitz"
MODE_NUMERIC = "numeric-eigen"

LAMBDA_LIMIT = 2**64


class PreconditionError(ValueError):
    """An input point fails the dissipative-equilibrium precondition."""


class NumericEigenvalueError(RuntimeError):
    """Numeric eigenvalues failed their residual contract."""


def _canon_mode(mode: str) -> str:
    if mode in ("exact", MODE_EXACT):
        return MODE_EXACT
    if mode in ("numeric", MODE_NUMERIC):
        return MODE_NUMERIC
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# stabilizers


def build_stabilizers(result: QuadratizationResult) -> list[Polynomial]:
    """Stabilizers h_i = y_i - a_i*b_i over the extended variables.

    Substituting the defining monomials for the new variables annihilates
    every h_i, and the Jacobian of h with respect to the new variables is
    unit triangular because the factor pairs only use earlier variables.
    """
    ext = result.ext_vars
    n = result.n_states
    total = len(ext)
    one = Fraction(1) if result.system.kind == "exact" else 1.0
    out = []
    for j, pair in enumerate(result.stabilizer_pairs):
        terms = {}
        y = [0] * total
        y[n + j] = 1
        terms[tuple(y)] = one
        ab = [0] * total
        for idx in pair:
            ab[idx] += 1
        ab = tuple(ab)
        terms[ab] = terms.get(ab, 0) - one
        out.append(Polynomial(ext, terms))
    return out


def stabilized_system(
    result: QuadratizationResult,
    stabilizers: Sequence[Polynomial],
    lam,
) -> PolySystem:
    """The quadratic system with y' = q2 - lambda * h."""
    if len(stabilizers) != len(result.q2):
        raise StructureError("one stabilizer per new variable required")
    rhs = list(result.q1)
    for q, h in zip(result.q2, stabilizers):
        rhs.append(q - h.scale(lam) if lam else q)
    return PolySystem(result.ext_vars, tuple(rhs))


# ---------------------------------------------------------------------------
# linear algebra over exact and float entries


def jacobian(sys: PolySystem, pt: Sequence) -> Matrix:
    """Entry (i, j) is d(rhs_i)/d(x_j) evaluated at pt."""
    if len(pt) != len(sys.vars):
        raise StructureError("point dimension does not match the system")
    n = len(sys.vars)
    return [[sys.rhs[i].diff(j).evaluate(pt) for j in range(n)] for i in range(n)]


def _check_square(M: Matrix) -> int:
    n = len(M)
    if any(len(row) != n for row in M):
        raise StructureError("matrix is not square")
    return n


def characteristic_polynomial(M: Matrix) -> list:
    """Monic coefficients of det(t*I - M), descending powers.

    Faddeev-LeVerrier recursion; only divisions by the integers 1..n occur,
    so rational inputs stay exact.
    """
    n = _check_square(M)
    if n == 0:
        return [Fraction(1)]
    exact = isinstance(M[0][0], Fraction)
    one = Fraction(1) if exact else 1.0
    coeffs = [one]
    Mk = [row[:] for row in M]
    for k in range(1, n + 1):
        trace = sum(Mk[i][i] for i in range(n))
        c = -trace / k
        coeffs.append(c)
        if k == n:
            break
        for i in range(n):
            Mk[i][i] = Mk[i][i] + c
        Mk = [
            [sum(M[i][l] * Mk[l][j] for l in range(n)) for j in range(n)]
            for i in range(n)
        ]
    return coeffs


def univariate_divmod(num: Sequence, den: Sequence) -> tuple[list, list]:
    """Polynomial long division on descending coefficient lists."""
    num = list(num)
    den = list(den)
    if not den or den[0] == 0:
        raise ZeroDivisionError("division by a zero leading coefficient")
    if len(num) < len(den):
        return [], num
    quot = []
    rest = num[:]
    for i in range(len(num) - len(den) + 1):
        q = rest[i] / den[0]
        quot.append(q)
        if q != 0:
            for j, d in enumerate(den):
                rest[i + j] = rest[i + j] - q * d
    rem = [c for c in rest[len(quot):]]
    while rem and rem[0] == 0:
        rem.pop(0)
    return quot, rem


def charpoly_divides(divisor: Sequence, dividend: Sequence) -> bool:
    """Exact divisibility of characteristic polynomials."""
    _, rem = univariate_divmod(dividend, divisor)
    return all(c == 0 for c in rem)


# ---------------------------------------------------------------------------
# Routh-Hurwitz


def routh_first_column(coeffs: Sequence) -> tuple[list, bool]:
    """First column of the Routh array for a monic polynomial.

    Returns (column, complete).  ``complete`` is False when a zero pivot
    stops the recursion early; dissipativity requires strict stability, so
    any degeneracy is already a failure and no epsilon perturbation is
    needed.
    """
    coeffs = list(coeffs)
    if not coeffs or coeffs[0] == 0:
        raise ValueError("leading coefficient must be nonzero")
    degree = len(coeffs) - 1
    if degree < 1:
        raise ValueError("polynomial degree must be at least 1")
    if coeffs[0] != 1:
        lead = coeffs[0]
        coeffs = [c / lead for c in coeffs]

    width = (degree + 2) // 2
    row_prev = [coeffs[i] if i < len(coeffs) else 0 for i in range(0, degree + 1, 2)]
    row_cur = [coeffs[i] if i < len(coeffs) else 0 for i in range(1, degree + 1, 2)]
    row_prev += [0] * (width - len(row_prev))
    row_cur += [0] * (width - len(row_cur))

    column = [row_prev[0], row_cur[0]]
    for _ in range(degree - 1):
        pivot = row_cur[0]
        if pivot == 0:
            return column, False
        nxt = []
        for j in range(width - 1):
            nxt.append((pivot * row_prev[j + 1] - row_prev[0] * row_cur[j + 1]) / pivot)
        nxt.append(0)
        row_prev, row_cur = row_cur, nxt
        column.append(row_cur[0])
    return column, True


def routh_hurwitz_stable(coeffs: Sequence) -> bool:
    """True iff all roots lie strictly in the open left half-plane.

    Requires every coefficient positive and the full Routh first column
    positive; any zero coefficient, zero pivot, or sign change reports
    unstable-or-marginal.
    """
    coeffs = list(coeffs)
    if not coeffs or coeffs[0] == 0:
        raise ValueError("leading coefficient must be nonzero")
    if len(coeffs) - 1 < 1:
        raise ValueError("polynomial degree must be at least 1")
    if any(c <= 0 for c in coeffs):
        return False
    column, complete = routh_first_column(coeffs)
    return complete and all(c > 0 for c in column)


# ---------------------------------------------------------------------------
# eigenvalues


def numeric_eigenvalues(M: Matrix, residual_tol: float = 1e-8) -> list[complex]:
    """All eigenvalues as complex floats, sorted by (real, imaginary) part.

    Contract: the normalized characteristic polynomial evaluated at each
    returned value must have magnitude below residual_tol * (1 + |mu|)^n;
    otherwise the computation is rejected and exact mode is recommended.
    """
    n = _check_square(M)
    if n == 0:
        return []
    rows = [[float(x) for x in row] for row in M]
    eig = np.linalg.eigvals(np.array(rows, dtype=float))
    coeffs = characteristic_polynomial(rows)
    scale = max(1.0, max(abs(c) for c in coeffs))
    normal = [c / scale for c in coeffs]
    for mu in eig:
        value = 0j
        for c in normal:
            value = value * mu + c
        if abs(value) > residual_tol * (1.0 + abs(mu)) ** n:
            raise NumericEigenvalueError(
                "numeric eigenvalue residual check failed; rerun in exact mode"
            )
    return sorted((complex(z) for z in eig), key=lambda z: (z.real, z.imag))


def _int_divisors(n: int, cap: int) -> Optional[list[int]]:
    n = abs(n)
    if n == 0:
        return None
    divs = []
    d = 1
    while d * d <= n:
        if n % d == 0:
            divs.append(d)
            if d != n // d:
                divs.append(n // d)
            if len(divs) > cap:
                return None
        d += 1
        if d > 2_000_000:  # give up on huge constant terms
            return None
    return sorted(divs)


def rational_roots(coeffs: Sequence[Fraction], cap: int = 4096):
    """Rational roots (with multiplicity) of a rational polynomial.

    Returns (roots, residual) where residual is the monic factor left after
    deflation, or None when the polynomial splits completely.  When the
    candidate set would be unreasonably large the search is skipped and the
    whole polynomial is reported as the residual.
    """
    coeffs = [Fraction(c) for c in coeffs]
    if not coeffs or coeffs[0] == 0:
        raise ValueError("leading coefficient must be nonzero")
    lead = coeffs[0]
    coeffs = [c / lead for c in coeffs]
    roots: list[Fraction] = []

    # zero roots first
    while len(coeffs) > 1 and coeffs[-1] == 0:
        roots.append(Fraction(0))
        coeffs.pop()

    def eval_at(cs, x):
        acc = Fraction(0)
        for c in cs:
            acc = acc * x + c
        return acc

    while len(coeffs) > 1:
        denl = math.lcm(*(c.denominator for c in coeffs))
        ints = [int(c * denl) for c in coeffs]
        ps = _int_divisors(ints[-1], cap)
        qs = _int_divisors(ints[0], cap)
        if ps is None or qs is None or len(ps) * len(qs) > cap:
            break
        found = None
        for p in ps:
            for q in qs:
                for cand in (Fraction(p, q), Fraction(-p, q)):
                    if eval_at(coeffs, cand) == 0:
                        found = cand
                        break
                if found is not None:
                    break
            if found is not None:
                break
        if found is None:
            break
        # deflate by (t - found)
        quot, rem = univariate_divmod(coeffs, [Fraction(1), -found])
        assert not rem
        roots.append(found)
        coeffs = quot

    roots.sort()
    residual = coeffs if len(coeffs) > 1 else None
    return roots, residual


def exact_eigenvalues(M: Matrix):
    """Rational eigenvalues plus the unfactored remainder of the charpoly."""
    return rational_roots(characteristic_polynomial(M))


# ---------------------------------------------------------------------------
# dissipativity checks


@dataclass
class EquilibriumCheck:
    """Verdict for one point, with the evidence the active backend produced."""

    point: tuple
    verdict: str
    exact: bool
    lifted_point: Optional[tuple] = None
    eigenvalues: Optional[list] = None
    residual_factor: Optional[list] = None
    routh_first_column: Optional[list] = None

    @property
    def dissipative(self) -> bool:
        return self.verdict == "dissipative"


@dataclass
class IterationEntry:
    lam: object
    checks: list


@dataclass
class StabilityReport:
    mode: str
    lam: object
    iterations: list = field(default_factory=list)
    equilibria: list = field(default_factory=list)


def _equilibrium_scale(p: Polynomial, pt) -> float:
    total = 1.0
    for m, c in p.terms.items():
        v = float(c)
        for x, e in zip(pt, m):
            if e:
                v *= float(x) ** e
        total += abs(v)
    return total


def verify_equilibrium(sys: PolySystem, pt, exact: bool, tol: float = 1e-9) -> None:
    """Raise PreconditionError naming the violated equation if p(pt) != 0."""
    for name, p in zip(sys.vars.names, sys.rhs):
        value = p.evaluate(pt)
        if exact:
            bad = value != 0
        else:
            bad = abs(float(value)) > tol * _equilibrium_scale(p, pt)
        if bad:
            point_str = "(" + ", ".join(str(c) for c in pt) + ")"
            raise PreconditionError(
                f"point {point_str} is not an equilibrium: {name}' evaluates "
                f"to {value}"
            )


def _verdict_numeric(eigs: list[complex], tol: float) -> str:
    worst = max(z.real for z in eigs)
    if worst < -tol:
        return "dissipative"
    if worst <= tol:
        return "marginal"
    return "not-dissipative"


def check_dissipative(
    sys: PolySystem, pt, mode: str = "exact", tol: float = 1e-9
) -> EquilibriumCheck:
    """Dissipativity of the system at an equilibrium point.

    Exact mode certifies via the Routh-Hurwitz criterion on the exact
    characteristic polynomial; it degrades to the numeric backend (with a
    warning) when the system or the point carries float data.  Numeric mode
    requires every eigenvalue real part below -tol.
    """
    mode = _canon_mode(mode)
    exact = mode == MODE_EXACT
    if exact and (
        sys.kind == "float" or any(not isinstance(c, Fraction) for c in pt)
    ):
        warnings.warn(
            "exact mode needs rational data end-to-end; falling back to "
            "numeric eigenvalues",
            stacklevel=2,
        )
        mode, exact = MODE_NUMERIC, False

    verify_equilibrium(sys, pt, exact, tol)
    M = jacobian(sys, pt)
    if not exact:
        M = [[float(x) for x in row] for row in M]
        eigs = numeric_eigenvalues(M)
        return EquilibriumCheck(
            point=tuple(pt),
            verdict=_verdict_numeric(eigs, tol),
            exact=False,
            eigenvalues=eigs,
        )
    coeffs = characteristic_polynomial(M)
    column, complete = routh_first_column(coeffs)
    stable = (
        all(c > 0 for c in coeffs) and complete and all(c > 0 for c in column)
    )
    roots, residual = rational_roots(coeffs)
    return EquilibriumCheck(
        point=tuple(pt),
        verdict="dissipative" if stable else "not-dissipative",
        exact=True,
        eigenvalues=roots,
        residual_factor=residual,
        routh_first_column=column,
    )


# ---------------------------------------------------------------------------
# the repair loop


def _worker_count() -> int:
    raw = os.environ.get("DISSQUAD_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def dissipative_quadratize(
    sys: PolySystem,
    points: Sequence,
    mode: str = "exact",
    budget: Optional[int] = None,
    tol: float = 1e-9,
    deadline: Optional[float] = None,
    max_workers: Optional[int] = None,
) -> tuple[QuadratizationResult, StabilityReport]:
    """Quadratize and repair stability at the given dissipative equilibria.

    Every input point must be an equilibrium of the original system and
    dissipative there (the lifted spectrum always contains the original
    one, so repair is impossible otherwise).  The stabilizer gain follows
    the schedule 0, 1, 2, 4, ...; the first lifted system dissipative at
    all lifted points is returned together with the full iteration trace.
    """
    mode = _canon_mode(mode)
    if mode == MODE_EXACT and (
        sys.kind == "float"
        or any(not isinstance(c, Fraction) for pt in points for c in pt)
    ):
        warnings.warn(
            "exact mode needs rational data end-to-end; falling back to "
            "numeric eigenvalues",
            stacklevel=2,
        )
        mode = MODE_NUMERIC

    for pt in points:
        pre = check_dissipative(sys, pt, mode, tol)
        if not pre.dissipative:
            point_str = "(" + ", ".join(str(c) for c in pt) + ")"
            raise PreconditionError(
                f"the original system is not dissipative at {point_str} "
                f"(verdict: {pre.verdict}); stabilization cannot help there"
            )

    result = branch_and_bound(sys, budget=budget, deadline=deadline)
    stabilizers = build_stabilizers(result)
    workers = max_workers if max_workers is not None else _worker_count()

    report = StabilityReport(mode=mode, lam=None)
    lam = Fraction(0)
    while True:
        sigma = stabilized_system(result, stabilizers, lam)

        def check_one(pt):
            lifted = result.lift_point(pt)
            entry = check_dissipative(sigma, lifted, mode, tol)
            entry.point = tuple(pt)
            entry.lifted_point = lifted
            return entry

        if workers > 1 and len(points) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                checks = list(pool.map(check_one, points))
        else:
            checks = [check_one(pt) for pt in points]

        report.iterations.append(IterationEntry(lam=lam, checks=checks))
        if all(c.dissipative for c in checks):
            report.lam = lam
            report.equilibria = checks
            return result.with_lambda(lam), report

        lam = Fraction(1) if lam == 0 else lam * 2
        if lam > LAMBDA_LIMIT:
            raise RuntimeError(
                "stabilizer gain exceeded 2**64; this should be impossible "
                "for dissipative input equilibria"
            )
        if deadline is not None and time.monotonic() > deadline:
            raise DeadlineExceededError("stabilization deadline exceeded")
