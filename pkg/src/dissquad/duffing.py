"""Coupled Duffing oscillator family used by the bench command.

An ensemble of n oscillators with damping delta and coupling matrix A
(tridiagonal: ones on the diagonal, 1/3 next to it) in first-order form:

    x_i' = z_i
    z_i' = (A x)_i - ((A x)_i)^3 - delta * z_i

With positive-definite A the system has 2^n dissipative equilibria, one per
sign pattern s in {-1, 1}^n: z = 0 and A x = s, solved exactly here rather
than by general root finding.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

from .poly import Polynomial, PolySystem, VarTable


def coupling_matrix(n: int, offdiag: Fraction = Fraction(1, 3)) -> list[list[Fraction]]:
    A = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        A[i][i] = Fraction(1)
        if i > 0:
            A[i][i - 1] = offdiag
        if i + 1 < n:
            A[i][i + 1] = offdiag
    return A


def coupled_duffing(
    n: int, delta: Fraction = Fraction(2), offdiag: Fraction = Fraction(1, 3)
) -> PolySystem:
    """First-order system of n coupled Duffing oscillators (dimension 2n)."""
    if n < 1:
        raise ValueError("need at least one oscillator")
    names = [f"x{i+1}" for i in range(n)] + [f"z{i+1}" for i in range(n)]
    vars = VarTable(names)
    A = coupling_matrix(n, offdiag)

    rhs = []
    for i in range(n):
        rhs.append(Polynomial.variable(vars, n + i))
    for i in range(n):
        ax = Polynomial.zero(vars)
        for j in range(n):
            if A[i][j]:
                ax = ax + Polynomial.variable(vars, j).scale(A[i][j])
        cubic = ax * ax * ax
        zi = Polynomial.variable(vars, n + i)
        rhs.append(ax - cubic - zi.scale(delta))
    return PolySystem(vars, tuple(rhs))


def _solve_exact(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    n = len(A)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[pivot] = M[pivot], M[col]
        inv = 1 / M[col][col]
        M[col] = [v * inv for v in M[col]]
        for r in range(n):
            if r != col and M[r][col]:
                factor = M[r][col]
                M[r] = [v - factor * w for v, w in zip(M[r], M[col])]
    return [M[i][n] for i in range(n)]


def duffing_equilibria(
    n: int, offdiag: Fraction = Fraction(1, 3)
) -> list[tuple]:
    """All 2^n candidate equilibria (x, 0) with A x running over {-1, 1}^n."""
    A = coupling_matrix(n, offdiag)
    zeros = (Fraction(0),) * n
    points = []
    for signs in itertools.product((Fraction(-1), Fraction(1)), repeat=n):
        x = _solve_exact(A, list(signs))
        points.append(tuple(x) + zeros)
    return points
