"""Trajectory integration for validating quadratizations numerically.

A Dormand-Prince 5(4) embedded pair with PI step-size control and the
standard fourth-order dense-output interpolant; everything runs in float
arithmetic (exact systems are converted on entry).  Divergence is reported,
not raised: once the state norm passes the blow-up threshold the trajectory
is returned with status "blow-up", which is the expected outcome for
unstable lifts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .poly import Monomial, PolySystem

BLOWUP_NORM = 1e12

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# b5 - b4: local error estimator weights
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
# dense-output weights for the quartic interpolant
_D = (
    -12715105075 / 11282082432,
    0.0,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
)


class IntegrationError(RuntimeError):
    """Step-size underflow or step budget exhausted (likely stiffness)."""


@dataclass
class Trajectory:
    """Sampled solution; ``status`` is "ok" or "blow-up"."""

    times: np.ndarray
    states: np.ndarray
    status: str
    t_final: float

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _compile_rhs(sys: PolySystem):
    eqs = []
    for p in sys.rhs:
        eqs.append([(float(c), m) for m, c in p.sorted_terms()])
    dim = len(sys.vars)

    def f(y):
        out = np.empty(dim)
        for i, terms in enumerate(eqs):
            acc = 0.0
            for c, m in terms:
                v = c
                for x, e in zip(y, m):
                    if e == 1:
                        v *= x
                    elif e:
                        v *= x**e
                acc += v
            out[i] = acc
        return out

    return f


def _initial_step(f, t_end, y0, rel_tol, abs_tol):
    f0 = f(y0)
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h0, t_end / 10)


def integrate(
    sys: PolySystem,
    x0: Sequence,
    t_end: float,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
    samples: int = 500,
    fixed_step: Optional[float] = None,
    max_steps: int = 2_000_000,
) -> Trajectory:
    """Integrate x' = p(x) over [0, t_end], sampling on a uniform grid.

    ``fixed_step`` disables the error controller and advances with that
    constant step (used by convergence-order checks).  Raises
    IntegrationError on step-size underflow; divergence beyond the blow-up
    norm ends the run early with status "blow-up" and the samples collected
    so far.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if not (0 < rel_tol < 1 and 0 < abs_tol < 1):
        raise ValueError("tolerances must lie in (0, 1)")
    f = _compile_rhs(sys.to_float() if sys.kind == "exact" else sys)
    y = np.array([float(c) for c in x0], dtype=float)
    if len(y) != len(sys.vars):
        raise ValueError("initial condition dimension mismatch")

    grid = np.linspace(0.0, t_end, samples)
    out = np.empty((samples, len(y)))
    out[0] = y
    filled = 1

    t = 0.0
    k1 = f(y)
    h = fixed_step if fixed_step is not None else _initial_step(f, t_end, y, rel_tol, abs_tol)
    facold = 1e-4
    status = "ok"

    for _ in range(max_steps):
        if filled >= samples or t >= t_end:
            break
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > BLOWUP_NORM:
            status = "blow-up"
            break
        h = min(h, t_end - t)
        if h <= 16 * np.finfo(float).eps * max(abs(t), 1.0):
            raise IntegrationError(
                f"step size underflow at t={t:.6g}; the problem looks stiff, "
                "try a shorter horizon or looser tolerances"
            )

        ks = [k1]
        failed = False
        for s in range(1, 7):
            ys = y + h * sum(a * k for a, k in zip(_A[s], ks))
            if not np.all(np.isfinite(ys)):
                failed = True
                break
            ks.append(f(ys))
        if failed:
            status = "blow-up"
            break
        y_new = y + h * sum(b * k for b, k in zip(_B5, ks))
        if not np.all(np.isfinite(y_new)):
            status = "blow-up"
            break

        if fixed_step is None:
            err_vec = h * sum(e * k for e, k in zip(_E, ks))
            scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        else:
            err = 0.0

        accepted = err <= 1.0
        if accepted:
            # dense output over [t, t+h]
            ydiff = y_new - y
            bspl = h * ks[0] - ydiff
            r4 = ydiff - h * ks[6] - bspl
            r5 = h * sum(d * k for d, k in zip(_D, ks))
            while filled < samples and grid[filled] <= t + h + 1e-14 * t_end:
                theta = (grid[filled] - t) / h
                out[filled] = y + theta * (
                    ydiff + (1 - theta) * (bspl + theta * (r4 + (1 - theta) * r5))
                )
                filled += 1
            t += h
            y = y_new
            k1 = ks[6]  # FSAL
        if fixed_step is None:
            expo = 0.2 - 0.04 * 0.75
            fac11 = err**expo if err > 0 else 1e-10
            fac = fac11 / facold**0.04
            fac = max(0.1, min(5.0, fac / 0.9))
            h_next = h / fac
            if accepted:
                facold = max(err, 1e-4)
            else:
                h_next = min(h_next, h)
            h = h_next
    else:
        raise IntegrationError("step budget exhausted; the problem looks stiff")

    times = grid[:filled]
    return Trajectory(
        times=times, states=out[:filled].copy(), status=status, t_final=t
    )


def lift_initial_condition(x0: Sequence, g: Sequence[Monomial]) -> tuple:
    """Append the new-variable values g_j(x0) to an initial condition."""
    vals = [float(c) for c in x0]
    extra = []
    for m in g:
        if len(m) != len(vals):
            raise ValueError("monomial arity does not match the state")
        v = 1.0
        for x, e in zip(vals, m):
            if e:
                v *= x**e
        extra.append(v)
    return tuple(vals) + tuple(extra)


@dataclass
class DriftReport:
    """Agreement between an original system and one of its lifts."""

    status_original: str
    status_lifted: str
    max_state_deviation: Optional[float]
    max_invariant_drift: Optional[float]


def compare(
    orig: PolySystem,
    lifted: PolySystem,
    g: Sequence[Monomial],
    x0: Sequence,
    t_end: float,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
    samples: int = 500,
) -> DriftReport:
    """Integrate both systems from a consistent initial condition and report
    the worst state deviation and invariant drift over the sample grid.

    Blow-ups are reported in the statuses, in which case the drift figures
    are computed over the common prefix (or omitted when empty).
    """
    n = len(orig.vars)
    y0 = lift_initial_condition(x0, g)
    traj_o = integrate(orig, x0, t_end, rel_tol, abs_tol, samples)
    traj_l = integrate(lifted, y0, t_end, rel_tol, abs_tol, samples)

    common = min(len(traj_o.times), len(traj_l.times))
    if common == 0:
        return DriftReport(traj_o.status, traj_l.status, None, None)

    xs_o = traj_o.states[:common, :]
    xs_l = traj_l.states[:common, :n]
    deviation = float(np.max(np.abs(xs_o - xs_l))) if common else None

    drift = 0.0
    for j, m in enumerate(g):
        vals = np.ones(common)
        for i, e in enumerate(m):
            if e:
                vals = vals * traj_l.states[:common, i] ** e
        drift = max(drift, float(np.max(np.abs(traj_l.states[:common, n + j] - vals))))

    return DriftReport(
        status_original=traj_o.status,
        status_lifted=traj_l.status,
        max_state_deviation=deviation,
        max_invariant_drift=drift,
    )


def trajectory_csv(traj: Trajectory, names: Sequence[str]) -> str:
    """CSV rendering: header ``t,var1,...``, one row per sample, and a final
    comment line carrying the integration status."""
    lines = ["t," + ",".join(names)]
    for t, row in zip(traj.times, traj.states):
        lines.append(f"{t:.12g}," + ",".join(f"{v:.12g}" for v in row))
    lines.append(f"# status: {traj.status} (t_final={traj.t_final:.12g})")
    return "\n".join(lines) + "\n"
