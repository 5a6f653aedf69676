"""Entry-exit function and the simulated return map to ``z = z0``."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .integrate import (
    EscapeError,
    EventSpec,
    Tolerances,
    integrate,
)
from .system import DegenerateSystemError, SlowFastSystem

__all__ = [
    "ExitSolve",
    "ReturnSample",
    "ConvergenceTable",
    "EntryConditionError",
    "ExitNotFoundError",
    "LevelCrossing",
    "first_level_crossing",
    "theoretical_exit",
    "numerical_return",
    "convergence_study",
    "exit_derivative",
    "Z0_DEFAULT",
]

Z0_DEFAULT = 0.1
QUAD_ABS = 1e-12
ROOT_XTOL = 1e-13
SCAN_PANELS = 2000
RELATIVE_ONLY_ABS = 1e-300
# below this z has lost relative precision to subnormal rounding
Z_UNDERFLOW = 1e-290


class EntryConditionError(ValueError):
    pass


class ExitNotFoundError(ValueError):
    """No balance point inside the domain.

    ``phi_min`` is the minimum of the cumulative integral seen on the scan.
    """

    def __init__(self, msg: str, phi_min: float):
        self.phi_min = phi_min
        super().__init__(f"{msg} (cumulative integral minimum {phi_min:.6g})")


def _quad(fn, a, b):
    val, _ = quad(fn, a, b, epsabs=QUAD_ABS * 0.1, epsrel=1e-12, limit=200)
    return val


def _refine_extremum(h, a, xs, i, panels, sign):
    """Minimum of ``sign * int_a^x h`` near node ``xs[i + 1]``."""
    lo, hi = xs[i], xs[min(i + 2, panels)]
    base = _quad(h, a, lo)
    res = minimize_scalar(lambda x: sign * (base + _quad(h, lo, x)), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    return float(res.fun)


@dataclass(frozen=True)
class LevelCrossing:
    x: float
    bracket: tuple[float, float]
    later: bool  # another crossing of the same kind exists further right
    phi_min: float
    at_boundary: bool = False


def first_sign_change(h: Callable[[float], float], a: float, b: float,
                      panels: int = SCAN_PANELS) -> float | None:
    """First zero of ``h`` in ``(a, b]`` where it changes sign, or ``None``."""
    xs = np.linspace(a, b, panels + 1)
    s0 = np.sign(h(a))
    for lo, hi in zip(xs[:-1], xs[1:]):
        v = h(hi)
        if v == 0.0 or np.sign(v) != s0:
            if v == 0.0:
                return float(hi)
            return float(brentq(h, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps))
    return None


def first_level_crossing(
    h: Callable[[float], float],
    a: float,
    b: float,
    level: float,
    rising: bool,
    panels: int = SCAN_PANELS,
    stop_at_sign_change: bool = False,
) -> LevelCrossing:
    """First ``x > a`` where ``Phi(x) = int_a^x h`` crosses ``level``.

    ``Phi`` is accumulated panel by panel with adaptive quadrature on a
    uniform grid over ``[a, b]``; the bracketing panel is refined with Brent's
    method. ``rising`` selects crossings from below (``True``) or from above.
    With ``stop_at_sign_change`` the search is confined to the stretch before
    the first zero of ``h``; reaching the level exactly at that zero is
    reported with ``at_boundary``.

    Raises ``ExitNotFoundError`` when no crossing exists and
    ``DegenerateSystemError`` when ``h`` vanishes on a whole panel or
    ``Phi`` touches the level without crossing it.
    """
    sgn = 1.0 if rising else -1.0
    truncated = False
    if stop_at_sign_change:
        xt = first_sign_change(h, a, b, panels)
        if xt is not None:
            truncated = True
            panels = max(8, int(panels * (xt - a) / (b - a)))
            b = xt
    xs = np.linspace(a, b, panels + 1)
    hs = [h(x) for x in xs]
    phi = 0.0
    phi_min = 0.0
    best_gap = -math.inf  # closest approach from the wrong side after leaving
    best_i = -1
    min_i = -1
    found = None
    later = False
    for i in range(panels):
        if hs[i] == 0.0 and hs[i + 1] == 0.0 and h(0.5 * (xs[i] + xs[i + 1])) == 0.0:
            raise DegenerateSystemError(
                f"h(x, 0) vanishes identically on [{xs[i]:.6g}, {xs[i + 1]:.6g}]"
            )
        phi_prev = phi
        phi = phi_prev + _quad(h, xs[i], xs[i + 1])
        if phi < phi_min:
            phi_min, min_i = phi, i
        gap_prev = sgn * (phi_prev - level)
        gap = sgn * (phi - level)
        if gap_prev < 0 <= gap:
            if found is None:
                found = i
            else:
                later = True
                break
        elif found is None and gap < 0 and i > 0 and gap > best_gap:
            best_gap, best_i = gap, i

    if found is None:
        if min_i >= 0:
            phi_min = min(phi_min, _refine_extremum(h, a, xs, min_i, panels, 1.0))
        if stop_at_sign_change:
            gap_end = sgn * (_quad(h, a, b) - level)
            if abs(gap_end) <= 1e-12:
                return LevelCrossing(float(b), (float(xs[-2]), float(b)), False,
                                     phi_min, at_boundary=True)
            raise ExitNotFoundError(
                "level not reached before the first sign change of h", phi_min
            )
        if best_i >= 0:
            # closest approach may fall between grid nodes
            peak = -_refine_extremum(h, a, xs, best_i, panels, -sgn)  # max of sgn*Phi
            best_gap = max(best_gap, peak - sgn * level)
        if best_gap > -1e-10:
            raise DegenerateSystemError(
                "cumulative integral touches the balance level without crossing it"
            )
        raise ExitNotFoundError("no balance point inside the domain", phi_min)

    lo, hi = float(xs[found]), float(xs[found + 1])
    phi_lo = _quad(h, a, lo) if found > 0 else 0.0

    def resid(x):
        return phi_lo + _quad(h, lo, x) - level

    r_lo, r_hi = resid(lo), resid(hi)
    if r_lo == 0.0:
        x = lo
    elif r_hi == 0.0 or r_lo * r_hi > 0:
        # direct integral and panel sums disagree only at rounding level here
        x = hi if abs(r_hi) <= abs(r_lo) else lo
    else:
        x = brentq(resid, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps,
                   maxiter=200)
    at_boundary = truncated and hi == b and abs(resid(b)) <= 1e-12
    if at_boundary:
        x = b
    return LevelCrossing(float(x), (lo, hi), later, phi_min, at_boundary)


@dataclass(frozen=True)
class ExitSolve:
    x0: float
    p0: float
    integral_residual: float
    bracket: tuple[float, float]
    leftmost: bool

    def to_dict(self) -> dict:
        return {
            "x0": self.x0,
            "p0": self.p0,
            "integral_residual": self.integral_residual,
            "bracket": list(self.bracket),
            "leftmost": self.leftmost,
        }


def _h0(sys: SlowFastSystem) -> Callable[[float], float]:
    return lambda x: float(sys.h(x, 0.0))


def theoretical_exit(sys: SlowFastSystem, x0: float,
                     panels: int = SCAN_PANELS) -> ExitSolve:
    """Solve ``int_{x0}^{p0} g(x,0)/f(x,0) dx = 0`` for the leftmost ``p0 > x0``.

    ``leftmost`` in the result reports that further balance points exist to
    the right of the selected one.
    """
    sys.domain.check(x0, 0.0)
    h = _h0(sys)
    if not h(x0) < 0:
        raise EntryConditionError(
            f"entry condition violated: g({x0}, 0) = {sys.g(x0, 0.0)!r} is not negative"
        )
    hit = first_level_crossing(h, x0, sys.domain.x_max, 0.0, rising=True, panels=panels)
    p0 = hit.x
    if not h(p0) > 0:
        raise DegenerateSystemError(f"balance point {p0} has g(p0, 0) <= 0")
    residual = _quad(h, x0, p0)
    return ExitSolve(float(x0), p0, residual, hit.bracket, hit.later)


def exit_derivative(sys: SlowFastSystem, x0: float) -> float:
    """``dp0/dx0 = h(x0, 0) / h(p0, 0)`` from differentiating the balance."""
    p0 = theoretical_exit(sys, x0).p0
    return float(sys.h(x0, 0.0) / sys.h(p0, 0.0))


@dataclass(frozen=True)
class ReturnSample:
    x0: float
    z0: float
    eps: float
    p_eps: float
    steps: int
    wall_time: float
    z_event: float = math.nan

    def to_dict(self) -> dict:
        return {"x0": self.x0, "z0": self.z0, "eps": self.eps, "p_eps": self.p_eps,
                "steps": self.steps, "wall_time": self.wall_time}


def _min_f(sys: SlowFastSystem, n: int = 41) -> float:
    d = sys.domain
    X, Z = np.meshgrid(np.linspace(d.x_min, d.x_max, n), np.linspace(0.0, d.z_max, n))
    vals = np.asarray(sys.f(X, Z), dtype=float) * np.ones_like(X)
    return float(vals.min())


def return_field(sys: SlowFastSystem, eps: float):
    f, g, m = sys.f, sys.g, sys.m
    if m == 2:
        def fld(y):
            x, z = y[0], y[1]
            return np.array([eps * f(x, z), g(x, z) * z * z])
    else:
        def fld(y):
            x, z = y[0], y[1]
            return np.array([eps * f(x, z), g(x, z) * z])
    return fld


def domain_guard(sys: SlowFastSystem):
    d = sys.domain

    def stop_if(y):
        if y[1] > d.z_max:
            return "z_max"
        if y[0] > d.x_max:
            return "x_max"
        if y[0] < d.x_min:
            return "x_min"
        if y[1] < 0.0:
            return "z_min"
        if 0.0 < y[1] < Z_UNDERFLOW:
            return "z_underflow"
        return None

    return stop_if


def numerical_return(sys: SlowFastSystem, x0: float, z0: float = Z0_DEFAULT,
                     eps: float = 1e-3, tol: Tolerances | None = None) -> ReturnSample:
    """First return of the trajectory through ``(x0, z0)`` to ``z = z0``.

    Raises :class:`~slowfast.integrate.EscapeError` (with ``face``) when the
    solution leaves the domain before returning.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not z0 > 0:
        raise ValueError("z0 must be positive")
    sys.domain.check(x0, z0)
    fmin = _min_f(sys)
    if not fmin > 0:
        raise DegenerateSystemError("f must be positive on the domain")
    t_max = 1.5 * (sys.domain.x_max - x0) / (eps * fmin) + 10.0
    event = EventSpec(lambda y: y[1] - z0, direction="rising", skip_initial=True)
    tol = tol or Tolerances()
    if sys.m == 1 and not isinstance(tol.abs, tuple):
        # z decays like exp(-c/eps) and is only meaningful relative to itself
        tol = replace(tol, abs=(tol.abs, RELATIVE_ONLY_ABS))
    t_start = time.perf_counter()
    traj = integrate(return_field(sys, eps), (x0, z0), (0.0, t_max), tol=tol,
                     event=event, stop_if=domain_guard(sys), dense=False)
    wall = time.perf_counter() - t_start
    return ReturnSample(float(x0), float(z0), float(eps), float(traj.event_state[0]),
                        traj.n_steps, wall, float(traj.event_state[1]))


@dataclass
class ConvergenceTable:
    x0: float
    z0: float
    p0: float
    rows: list = field(default_factory=list)  # (eps, p_eps, p0, err)
    escaped: list = field(default_factory=list)  # (eps, face)

    @property
    def errors(self) -> list[float]:
        return [r[3] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "p_eps", "p0", "err"])
        for eps, p, p0, err in self.rows:
            w.writerow([f"{eps:.17g}", f"{p:.17g}", f"{p0:.17g}", f"{err:.17g}"])
        return buf.getvalue()


def convergence_study(sys: SlowFastSystem, x0: float, z0: float,
                      eps_ladder: Sequence[float],
                      tol: Tolerances | None = None) -> ConvergenceTable:
    """Return-map error ``p_eps - p0`` along a decreasing ladder of eps.

    Values of eps for which the solution escapes the domain are listed in
    ``escaped`` rather than in ``rows``.
    """
    ladder = [float(e) for e in eps_ladder]
    if any(e <= 0 for e in ladder):
        raise ValueError("eps ladder must be positive")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing")
    p0 = theoretical_exit(sys, x0).p0
    table = ConvergenceTable(float(x0), float(z0), p0)
    for eps in ladder:
        try:
            s = numerical_return(sys, x0, z0, eps, tol)
        except EscapeError as exc:
            table.escaped.append((eps, exc.face))
            continue
        table.rows.append((eps, s.p_eps, p0, s.p_eps - p0))
    return table
