"""Dormand-Prince 5(4) integrator with dense output and event location.

This is the only time stepper in the package. Fields are autonomous:
``field(y) -> dy/dt`` on 1-d float arrays.
"""
from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "Tolerances",
    "EventSpec",
    "Trajectory",
    "IntegrationError",
    "MaxStepsError",
    "StepUnderflowError",
    "EventNotFoundError",
    "EscapeError",
    "integrate",
    "write_csv",
]

# Dormand-Prince tableau (Hairer, Norsett & Wanner, vol. I).
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
_B = _A[6]
# difference between 5th and embedded 4th order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# continuous extension (order 4)
_D = (
    -12715105075 / 11282082432,
    0.0,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
)

EVENT_TOL = 1e-12
GUARD_BAND = 1e-8
_N_SCAN = 8


class IntegrationError(RuntimeError):
    """Base class for integrator failures."""


class MaxStepsError(IntegrationError):
    pass


class StepUnderflowError(IntegrationError):
    pass


class EventNotFoundError(IntegrationError):
    pass


class EscapeError(IntegrationError):
    """Raised when a trajectory leaves the region allowed by ``stop_if``."""

    def __init__(self, face: str, t: float, state):
        self.face = face
        self.t = t
        self.state = np.array(state, dtype=float)
        super().__init__(f"trajectory left the domain through {face} at t={t:.6g}")


@dataclass(frozen=True)
class Tolerances:
    """Step-control tolerances.

    ``abs`` may be a float or a per-component tuple.
    """

    rel: float = 1e-10
    abs: float | tuple = 1e-12
    h_min: float = 1e-14
    h_max: float = math.inf
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (self.rel > 0 and np.all(np.asarray(self.abs) > 0)):
            raise ValueError("tolerances must be positive")
        if not self.h_min < self.h_max:
            raise ValueError("need h_min < h_max")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def scaled(self, factor: float) -> "Tolerances":
        abs_ = self.abs
        abs_ = tuple(a * factor for a in abs_) if isinstance(abs_, tuple) else abs_ * factor
        return Tolerances(self.rel * factor, abs_, self.h_min, self.h_max, self.max_steps)

    def to_dict(self) -> dict:
        abs_ = list(self.abs) if isinstance(self.abs, tuple) else self.abs
        return {"rel": self.rel, "abs": abs_, "h_min": self.h_min,
                "h_max": self.h_max, "max_steps": self.max_steps}


@dataclass(frozen=True)
class EventSpec:
    """Stop at a zero crossing of ``surface(state)``.

    ``direction`` is ``"rising"``, ``"falling"`` or ``"any"``. With
    ``skip_initial`` the detector is armed only after ``|surface|`` first
    exceeds the guard band, so a start on the surface is not reported.
    """

    surface: Callable[[np.ndarray], float]
    direction: str = "any"
    skip_initial: bool = False
    count: int = 1

    def __post_init__(self):
        if self.direction not in ("rising", "falling", "any"):
            raise ValueError(f"bad direction {self.direction!r}")
        if self.count < 1:
            raise ValueError("count must be >= 1")

    def matches(self, s0: float, s1: float) -> bool:
        if self.direction in ("rising", "any") and s0 < 0.0 <= s1:
            return True
        if self.direction in ("falling", "any") and s0 > 0.0 >= s1:
            return True
        return False


@dataclass
class _Segment:
    t0: float
    h: float
    r: tuple  # rcont1..rcont5

    def __call__(self, t: float) -> np.ndarray:
        th = (t - self.t0) / self.h
        th1 = 1.0 - th
        r1, r2, r3, r4, r5 = self.r
        return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)))


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    segments: list = field(repr=False, default_factory=list)
    event_t: Optional[float] = None
    event_state: Optional[np.ndarray] = None
    n_steps: int = 0
    n_rejected: int = 0
    n_fev: int = 0
    tol: Optional[Tolerances] = None

    def __call__(self, t: float) -> np.ndarray:
        """Dense-output state at time ``t`` inside the integrated span."""
        ts = self.t
        forward = ts[-1] >= ts[0]
        lo, hi = (ts[0], ts[-1]) if forward else (ts[-1], ts[0])
        if not lo - 1e-12 * max(1.0, abs(lo)) <= t <= hi + 1e-12 * max(1.0, abs(hi)):
            raise ValueError(f"t={t} outside trajectory span [{lo}, {hi}]")
        if forward:
            i = bisect_right(ts, t) - 1
        else:
            i = bisect_right(-ts, -t) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return self.segments[i](t)

    @property
    def final_state(self) -> np.ndarray:
        return self.y[-1]

    def flags(self) -> dict:
        return {"steps": self.n_steps, "rejected": self.n_rejected,
                "fev": self.n_fev}


def _rk_step(field_, y, k1, h):
    a = _A
    k2 = field_(y + h * (a[1][0] * k1))
    k3 = field_(y + h * (a[2][0] * k1 + a[2][1] * k2))
    k4 = field_(y + h * (a[3][0] * k1 + a[3][1] * k2 + a[3][2] * k3))
    k5 = field_(y + h * (a[4][0] * k1 + a[4][1] * k2 + a[4][2] * k3 + a[4][3] * k4))
    k6 = field_(y + h * (a[5][0] * k1 + a[5][1] * k2 + a[5][2] * k3 + a[5][3] * k4
                         + a[5][4] * k5))
    y1 = y + h * (_B[0] * k1 + _B[2] * k3 + _B[3] * k4 + _B[4] * k5 + _B[5] * k6)
    k7 = field_(y1)
    return y1, (k1, k2, k3, k4, k5, k6, k7)


def _initial_step(field_, y0, f0, direction, tol: Tolerances):
    sc = np.asarray(tol.abs) + tol.rel * np.abs(y0)
    d0 = math.sqrt(np.mean((y0 / sc) ** 2))
    d1 = math.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, tol.h_max)
    y1 = y0 + direction * h0 * f0
    f1 = field_(y1)
    d2 = math.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, tol.h_max)


def integrate(
    field_: Callable[[np.ndarray], np.ndarray],
    x0: Sequence[float],
    t_span: tuple[float, float],
    tol: Tolerances | None = None,
    event: EventSpec | None = None,
    stop_if: Callable[[np.ndarray], Optional[str]] | None = None,
    dense: bool = True,
) -> Trajectory:
    """Integrate ``y' = field_(y)`` from ``x0`` over ``t_span``.

    Integration runs backwards when ``t_span[1] < t_span[0]``. With an
    ``event`` the run stops at the requested crossing; reaching the end of
    the span first raises :class:`EventNotFoundError`. ``stop_if`` is checked
    at every accepted node and returns a face name to abort with
    :class:`EscapeError`.
    """
    tol = tol or Tolerances()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1)):
        raise ValueError("t_span must be finite")
    y = np.array(x0, dtype=float)
    atol = np.asarray(tol.abs, dtype=float)
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)

    f = np.asarray(field_(y), dtype=float)
    nfev = 1
    ts = [t0]
    ys = [y.copy()]
    segments: list[_Segment] = []
    if span == 0.0:
        return Trajectory(np.array(ts), np.array(ys), segments, tol=tol, n_fev=nfev)

    h = _initial_step(field_, y, f, direction, tol)
    nfev += 1
    h = min(max(h, tol.h_min), span)

    # Kahan-compensated elapsed time
    elapsed = 0.0
    comp = 0.0
    t = t0

    surface = event.surface if event else None
    s_prev = float(surface(y)) if event else 0.0
    armed = event is not None and (not event.skip_initial or abs(s_prev) > GUARD_BAND)
    crossings = 0

    n_steps = n_rej = 0
    facmax = 5.0
    safety = 0.9
    err_prev = 1e-4
    while True:
        if n_steps >= tol.max_steps:
            raise MaxStepsError(f"max_steps={tol.max_steps} exceeded at t={t:.6g}")
        remaining = span - elapsed
        last = False
        if h >= remaining:
            h = remaining
            last = True
        if h < tol.h_min and not last:
            raise StepUnderflowError(f"step size {h:.3e} below h_min at t={t:.6g}")

        hs = direction * h
        y_new, ks = _rk_step(field_, y, f, hs)
        nfev += 6
        errv = hs * (_E[0] * ks[0] + _E[2] * ks[2] + _E[3] * ks[3] + _E[4] * ks[4]
                     + _E[5] * ks[5] + _E[6] * ks[6])
        sc = atol + tol.rel * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(np.mean((errv / sc) ** 2))
        if not math.isfinite(err):
            err = 1e10

        if err > 1.0:
            n_rej += 1
            h *= max(0.2, safety * err ** (-0.2))
            facmax = 1.0
            if h < tol.h_min:
                raise StepUnderflowError(f"step size {h:.3e} below h_min at t={t:.6g}")
            continue

        n_steps += 1
        # elapsed += h with compensation
        yk = h - comp
        tk = elapsed + yk
        comp = (tk - elapsed) - yk
        elapsed = tk
        t_new = t0 + direction * elapsed if not last else t1

        k1, k2, k3, k4, k5, k6, k7 = ks
        r2 = y_new - y
        r3 = hs * k1 - r2
        r4 = r2 - hs * k7 - r3
        r5 = hs * (_D[0] * k1 + _D[2] * k3 + _D[3] * k4 + _D[4] * k5
                   + _D[5] * k6 + _D[6] * k7)
        seg = _Segment(t, t_new - t, (y.copy(), r2, r3, r4, r5))

        if event is not None:
            hit = _scan_step(event, seg, s_prev, armed)
            if hit is not None:
                lo_th, hi_th, armed = hit[0], hit[1], True
                crossings += 1
                if crossings >= event.count:
                    te, ye = _locate(field_, event.surface, y, f, t, seg.h, lo_th, hi_th)
                    nfev += 60
                    if dense:
                        segments.append(seg)
                    ts.append(te)
                    ys.append(ye)
                    return Trajectory(np.array(ts), np.array(ys), segments, te, ye,
                                      n_steps, n_rej, nfev, tol)
                s_prev = float(surface(y_new))
            else:
                s_new = float(surface(y_new))
                if not armed:
                    armed = _armed_within(event, seg, s_new)
                s_prev = s_new

        if dense:
            segments.append(seg)
        y = y_new
        f = k7
        t = t_new
        ts.append(t)
        ys.append(y.copy())

        if stop_if is not None:
            face = stop_if(y)
            if face:
                raise EscapeError(face, t, y)
        if last:
            break

        err = max(err, 1e-10)
        # PI controller (Gustafsson), exponents as in dopri5
        fac = safety * err ** (-0.17) * err_prev ** 0.04
        fac = min(facmax, max(0.2, fac))
        err_prev = err
        facmax = 5.0
        h = min(h * fac, tol.h_max)

    if event is not None:
        raise EventNotFoundError(
            f"event not found within t_span after {n_steps} steps "
            f"({crossings} of {event.count} crossings seen)"
        )
    return Trajectory(np.array(ts), np.array(ys), segments, None, None,
                      n_steps, n_rej, nfev, tol)


def _armed_within(event: EventSpec, seg: _Segment, s_end: float) -> bool:
    if abs(s_end) > GUARD_BAND:
        return True
    for j in range(1, _N_SCAN):
        if abs(float(event.surface(seg(seg.t0 + seg.h * j / _N_SCAN)))) > GUARD_BAND:
            return True
    return False


def _scan_step(event: EventSpec, seg: _Segment, s_start: float, armed: bool):
    """Find the first matching crossing inside a step on the dense output.

    Returns ``(theta_lo, theta_hi, armed)`` or ``None``.
    """
    prev_th, prev_s = 0.0, s_start
    for j in range(1, _N_SCAN + 1):
        th = j / _N_SCAN
        yj = seg(seg.t0 + seg.h * th) if j < _N_SCAN else seg.r[0] + seg.r[1]
        sj = float(event.surface(yj))
        if armed and event.matches(prev_s, sj):
            return prev_th, th, True
        if not armed and abs(sj) > GUARD_BAND:
            armed = True
        prev_th, prev_s = th, sj
    return None


def _locate(field_, surface, y, f, t, h, lo_th, hi_th):
    """Refine a bracketed crossing using direct RK steps from the step start.

    Using true steps rather than the interpolant keeps the event state at the
    accuracy of the integrator itself.
    """

    def phi(tau):
        if tau == 0.0:
            return float(surface(y))
        return float(surface(_rk_step(field_, y, f, tau)[0]))

    a, b = lo_th * h, hi_th * h
    fa, fb = phi(a), phi(b)
    if fa * fb > 0:
        # dense bracket not confirmed by true steps; fall back to the full step
        a, b = 0.0, h
        fa, fb = phi(a), phi(b)
    if fa == 0.0:
        tau = a
    elif fb == 0.0:
        tau = b
    elif fa * fb > 0:
        raise EventNotFoundError("could not bracket event crossing within step")
    else:
        tau = brentq(phi, a, b, xtol=4e-16 * max(abs(h), 1e-300), rtol=1e-15,
                     maxiter=200)
    ye = y.copy() if tau == 0.0 else _rk_step(field_, y, f, tau)[0]
    return t + tau, ye


def write_csv(traj: Trajectory, path, names: Sequence[str] = ("x", "z")) -> None:
    """Write nodes as CSV with header ``t,<names>``, 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names])
        for t, y in zip(traj.t, traj.y):
            w.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in y)])
