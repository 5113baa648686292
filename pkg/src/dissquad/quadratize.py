"""Search for an optimal inner-quadratic monomial quadratization.

The search is branch-and-bound over sets of new monomial variables.  A node
is a set ``new_vars``; its generalized variables V are {1, the states, the
new variables}.  Two deficiency sets drive the branching:

* NS: monomials occurring in any right-hand side (of the states or of the
  time derivatives of the new variables) that are not a product of two
  elements of V;
* NQ: new variables admitting no factorization into two non-unit elements
  of V.

A node with NS and NQ empty is a solution.  Branching picks the element of
NS + NQ with the fewest admissible factorizations, and each factorization
m = m1*m2 spawns a child adding {m1, m2} \\ V (for NQ elements the unit
factor is not admissible).  Nodes that cannot beat the incumbent size are
pruned.  Among all minimum-cardinality solutions the degree-sorted list
that is smallest in the canonical monomial order is returned, so results
are deterministic.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

from .poly import (
    Monomial,
    Polynomial,
    PolySystem,
    StructureError,
    VarTable,
    lie_derivative,
    mono_degree,
    mono_div,
    mono_divides,
    mono_key,
    mono_mul,
    mono_one,
    unordered_decompositions,
)


class BudgetExceededError(RuntimeError):
    """No quadratization exists within the requested new-variable budget."""

    def __init__(self, budget: int):
        super().__init__(
            f"no inner-quadratic quadratization with at most {budget} new "
            "variables; a larger budget always succeeds"
        )
        self.budget = budget


class DeadlineExceededError(RuntimeError):
    """Cooperative timeout raised when a search deadline passes."""


class NotQuadratizationError(ValueError):
    """The proposed variable set is not an inner-quadratic quadratization."""

    def __init__(self, ns, nq):
        names = ", ".join(str(m) for m in tuple(ns) + tuple(nq))
        super().__init__(f"not a quadratization; offending monomials: {names}")
        self.ns = tuple(ns)
        self.nq = tuple(nq)


@dataclass(frozen=True)
class SubproblemState:
    """Deficiency sets of one search node."""

    new_vars: tuple
    ns: tuple
    nq: tuple

    def is_solution(self) -> bool:
        return not self.ns and not self.nq


@dataclass(frozen=True)
class QuadratizationResult:
    """New variables plus the quadratic right-hand sides they induce.

    ``new_vars`` are monomials in the original states, degree-sorted; the
    extended table appends one fresh variable name per monomial.  ``q1``
    and ``q2`` are polynomials of degree at most two over the extended
    variables; substituting the new variables by their defining monomials
    recovers the original right-hand sides and the corresponding Lie
    derivatives exactly.  ``stabilizer_pairs`` holds, for each new
    variable, the extended-variable index pair (a, b) with a*b equal to the
    defining monomial, using only states and earlier new variables.
    """

    system: PolySystem
    new_vars: tuple
    ext_vars: VarTable
    q1: tuple
    q2: tuple
    stabilizer_pairs: tuple
    lam: Optional[Fraction] = None

    @property
    def n_states(self) -> int:
        return len(self.system.vars)

    def new_var_polys(self) -> list[Polynomial]:
        """The defining monomials g as polynomials over the original states."""
        one = Fraction(1) if self.system.kind == "exact" else 1.0
        return [
            Polynomial.from_monomial(self.system.vars, g, one)
            for g in self.new_vars
        ]

    def substitution_images(self) -> list[Polynomial]:
        """Images mapping each extended variable to a polynomial in x."""
        images = [
            Polynomial.variable(self.system.vars, i)
            for i in range(self.n_states)
        ]
        one = Fraction(1) if self.system.kind == "exact" else 1.0
        images += [
            Polynomial.from_monomial(self.system.vars, g, one)
            for g in self.new_vars
        ]
        return images

    def lift_point(self, pt: Sequence) -> tuple:
        """Append the new-variable values g(pt) to a state-space point."""
        if len(pt) != self.n_states:
            raise StructureError(
                f"point of length {len(pt)} for {self.n_states} states"
            )
        extra = []
        for g in self.new_vars:
            acc = None
            for x, e in zip(pt, g):
                if e:
                    acc = x**e if acc is None else acc * x**e
            extra.append(acc if acc is not None else 1)
        return tuple(pt) + tuple(extra)

    def with_lambda(self, lam) -> "QuadratizationResult":
        return replace(self, lam=lam)


# ---------------------------------------------------------------------------
# deficiency sets


def _base_v(nvars: int) -> set:
    v = {mono_one(nvars)}
    for i in range(nvars):
        v.add(tuple(1 if j == i else 0 for j in range(nvars)))
    return v


def _in_v2(m: Monomial, vset: set) -> bool:
    for v in vset:
        if mono_divides(v, m) and tuple(a - b for a, b in zip(m, v)) in vset:
            return True
    return False


def _has_nonunit_split(m: Monomial, vset: set) -> bool:
    for v in vset:
        if mono_degree(v) == 0 or not mono_divides(v, m):
            continue
        rest = tuple(a - b for a, b in zip(m, v))
        if mono_degree(rest) > 0 and rest in vset:
            return True
    return False


class _LieSupports:
    """Cache of the exact monomial support of d(z)/dt for candidate z."""

    def __init__(self, sys: PolySystem):
        self.sys = sys
        self.cache: dict = {}
        one = Fraction(1) if sys.kind == "exact" else 1.0
        self.one = one

    def __call__(self, z: Monomial) -> frozenset:
        got = self.cache.get(z)
        if got is None:
            g = Polynomial.from_monomial(self.sys.vars, z, self.one)
            got = lie_derivative(g, self.sys).support()
            self.cache[z] = got
        return got


def compute_ns_nq(sys: PolySystem, new_vars: Sequence[Monomial]) -> SubproblemState:
    """Deficiency sets NS and NQ for a set of candidate new variables."""
    for z in new_vars:
        if mono_degree(z) < 2:
            raise ValueError(f"new variable {z} must have total degree >= 2")
    lie = _LieSupports(sys)
    return _state_for(sys, tuple(sorted(set(new_vars), key=mono_key)), lie)


def _state_for(sys: PolySystem, new_vars: tuple, lie: _LieSupports) -> SubproblemState:
    vset = _base_v(len(sys.vars))
    vset.update(new_vars)
    targets = set()
    for p in sys.rhs:
        targets.update(p.terms)
    for z in new_vars:
        targets.update(lie(z))
    ns = tuple(sorted((t for t in targets if not _in_v2(t, vset)), key=mono_key))
    nq = tuple(
        sorted((z for z in new_vars if not _has_nonunit_split(z, vset)), key=mono_key)
    )
    return SubproblemState(new_vars=new_vars, ns=ns, nq=nq)


def score(state: SubproblemState, m: Monomial):
    """Branching score: fewest admissible factorizations first, then higher
    total degree, then the canonical monomial order."""
    if m in state.ns:
        allow_unit = True
    elif m in state.nq:
        allow_unit = False
    else:
        raise ValueError(f"{m} is not in NS or NQ of this state")
    count = len(unordered_decompositions(m, allow_unit=allow_unit))
    return (count, -mono_degree(m), mono_key(m))


# ---------------------------------------------------------------------------
# branch and bound


class _Search:
    def __init__(self, sys: PolySystem, budget, deadline):
        self.sys = sys
        self.budget = budget
        self.deadline = deadline
        self.lie = _LieSupports(sys)
        self.visited: set = set()
        self.best_size: Optional[int] = None
        self.best: Optional[tuple] = None
        self.base_v = _base_v(len(sys.vars))

    def _tick(self):
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise DeadlineExceededError("quadratization search deadline exceeded")

    def run(self):
        self._visit(frozenset())
        return self.best

    def _limit(self) -> Optional[int]:
        limits = [x for x in (self.budget, self.best_size) if x is not None]
        return min(limits) if limits else None

    def _visit(self, var_set: frozenset):
        self._tick()
        if var_set in self.visited:
            return
        self.visited.add(var_set)

        ordered = tuple(sorted(var_set, key=mono_key))
        state = _state_for(self.sys, ordered, self.lie)
        size = len(var_set)

        if state.is_solution():
            if self.best_size is None or size < self.best_size:
                self.best_size, self.best = size, ordered
            elif size == self.best_size and self._lex_less(ordered, self.best):
                self.best = ordered
            return

        limit = self._limit()
        if limit is not None and size >= limit:
            return

        pool = state.ns + state.nq
        m = min(pool, key=lambda cand: score(state, cand))
        vset = self.base_v | var_set
        children = []
        for m1, m2 in unordered_decompositions(m, allow_unit=m in state.ns):
            added = frozenset(f for f in (m1, m2) if f not in vset)
            child = var_set | added
            if limit is not None and len(child) > limit:
                continue
            children.append((len(added), sum(map(mono_degree, added)), child))
        # cheap completions first so the incumbent tightens early
        children.sort(key=lambda c: (c[0], c[1], tuple(sorted(c[2]))))
        for _, _, child in children:
            self._visit(child)

    @staticmethod
    def _lex_less(a: tuple, b: tuple) -> bool:
        return [mono_key(m) for m in a] < [mono_key(m) for m in b]


def branch_and_bound(
    sys: PolySystem,
    budget: Optional[int] = None,
    deadline: Optional[float] = None,
) -> QuadratizationResult:
    """Minimum-cardinality inner-quadratic monomial quadratization.

    Among all minimum-cardinality solutions, the degree-sorted variable list
    smallest in the canonical monomial order is returned.  ``budget``
    bounds the number of new variables; if no solution fits, a
    BudgetExceededError is raised (a large enough budget always succeeds).
    """
    if sys.max_degree() <= 2:
        return rewrite_quadratic(sys, ())
    best = _Search(sys, budget, deadline).run()
    if best is None:
        raise BudgetExceededError(budget if budget is not None else 0)
    return rewrite_quadratic(sys, best)


def carothers_universal(sys: PolySystem) -> QuadratizationResult:
    """Universal quadratization: all monomials inside the per-variable degree
    box of the system, excluding constants and single variables.

    Always inner-quadratic (each element factors as (m / x_j) * x_j), so it
    serves as a correct though usually oversized fallback and as an oracle
    upper bound for the search.
    """
    if sys.max_degree() <= 2:
        return rewrite_quadratic(sys, ())
    n = len(sys.vars)
    degs = [max(p.degree_in(i) for p in sys.rhs) for i in range(n)]
    box = itertools.product(*(range(d + 1) for d in degs))
    univ = tuple(
        sorted((m for m in box if mono_degree(m) > 1), key=mono_key)
    )
    return rewrite_quadratic(sys, univ)


# ---------------------------------------------------------------------------
# quadratic rewriting


def rewrite_quadratic(
    sys: PolySystem, new_vars: Sequence[Monomial]
) -> QuadratizationResult:
    """Rewrite the system (and the new variables' Lie derivatives) with
    degree at most two over the extended variables.

    Every right-hand-side monomial is replaced by a product of two
    generalized variables, preferring factorizations using the fewest new
    variables, with ties broken by the canonical order of the factor pair;
    monomials of degree at most two in the states therefore stay in the
    states.  Requires NS and NQ to be empty for ``new_vars``.
    """
    g = tuple(sorted(set(new_vars), key=mono_key))
    state = compute_ns_nq(sys, g)
    if not state.is_solution():
        raise NotQuadratizationError(state.ns, state.nq)

    n = len(sys.vars)
    ext = sys.vars.extended(sys.vars.fresh_names(len(g)))
    total = len(ext)
    exact = sys.kind == "exact"

    # map each generalized variable (as a monomial in x) to its extended index
    ext_index: dict[Monomial, Optional[int]] = {mono_one(n): None}
    for i in range(n):
        ext_index[tuple(1 if j == i else 0 for j in range(n))] = i
    for j, z in enumerate(g):
        ext_index[z] = n + j
    vlist = sorted(ext_index, key=mono_key)

    def ext_mono(u: Monomial, v: Monomial) -> Monomial:
        m = [0] * total
        for w in (u, v):
            idx = ext_index[w]
            if idx is not None:
                m[idx] += 1
        return tuple(m)

    def rewrite_term(m: Monomial) -> Monomial:
        best_pair = None
        best_rank = None
        for u in vlist:
            if not mono_divides(u, m):
                continue
            v = mono_div(m, u)
            if v not in ext_index:
                continue
            if mono_key(u) > mono_key(v):
                continue
            y_count = (mono_degree(u) >= 2) + (mono_degree(v) >= 2)
            rank = (y_count, mono_key(u), mono_key(v))
            if best_rank is None or rank < best_rank:
                best_rank, best_pair = rank, (u, v)
        assert best_pair is not None, f"monomial {m} not decomposable"
        return ext_mono(*best_pair)

    def rewrite_poly(p: Polynomial) -> Polynomial:
        terms: dict = {}
        for m, c in p.terms.items():
            em = rewrite_term(m)
            terms[em] = terms.get(em, 0) + c
        return Polynomial(ext, terms)

    q1 = tuple(rewrite_poly(p) for p in sys.rhs)

    one = Fraction(1) if exact else 1.0
    q2 = []
    for z in g:
        dz = lie_derivative(Polynomial.from_monomial(sys.vars, z, one), sys)
        q2.append(rewrite_poly(dz))

    pairs = []
    for j, z in enumerate(g):
        best = None
        for u in vlist:
            du = mono_degree(u)
            if du == 0 or not mono_divides(u, z):
                continue
            v = mono_div(z, u)
            dv = mono_degree(v)
            if dv == 0 or v not in ext_index:
                continue
            iu, iv = ext_index[u], ext_index[v]
            if iu >= n + j or iv >= n + j:
                continue  # only states and earlier new variables
            cand = (iu, iv) if iu <= iv else (iv, iu)
            if best is None or cand < best:
                best = cand
        assert best is not None, f"no stabilizer pair for {z}"
        pairs.append(best)

    return QuadratizationResult(
        system=sys,
        new_vars=g,
        ext_vars=ext,
        q1=q1,
        q2=tuple(q2),
        stabilizer_pairs=tuple(pairs),
    )
