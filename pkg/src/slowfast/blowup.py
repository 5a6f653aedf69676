"""Cylindrical blow-up of the x-axis: charts, desingularized fields and the
corner transition maps of the singular orbit.

The blown-up fields are written for ``m = 2`` after division by ``f``, with
``h = g/f``. All quantitative maps use the affine chart ``eps = z*E``; the
polar chart ``(x, theta, r)`` is provided for visualization and round trips.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .entryexit import (
    ExitNotFoundError,
    first_level_crossing,
    theoretical_exit,
)
from .integrate import EventSpec, IntegrationError, Tolerances, Trajectory, integrate
from .system import SlowFastSystem

__all__ = [
    "PolarState",
    "AffineState",
    "SingularOrbit",
    "PipelineResult",
    "ChartOverflowError",
    "ChartBoundaryWarning",
    "IntegrationQualityError",
    "affine_to_original",
    "polar_to_affine",
    "affine_to_polar",
    "polar_affine_roundtrip",
    "affine_rhs",
    "polar_rhs",
    "transition_X1",
    "transition_X2",
    "transition_X3",
    "singular_composition",
    "affine_pipeline",
    "E1_DEFAULT",
]

E1_DEFAULT = 0.2
CONSERVATION_LIMIT = 1e-6


class ChartOverflowError(ValueError):
    """The corner passage would leave the chart before reaching ``E = E1``."""


class ChartBoundaryWarning(UserWarning):
    pass


class IntegrationQualityError(IntegrationError):
    pass


class PolarState(NamedTuple):
    x: float
    theta: float
    r: float


class AffineState(NamedTuple):
    x: float
    z: float
    E: float

    @property
    def eps(self) -> float:
        return self.z * self.E


def affine_to_original(s: AffineState) -> tuple[float, float, float]:
    """Blow down: ``(x, z, E) -> (x, z, z*E)``."""
    return (float(s[0]), float(s[1]), float(s[1]) * float(s[2]))


def polar_to_affine(s: PolarState) -> AffineState:
    x, theta, r = s
    if not 0.0 <= theta < math.pi / 2:
        raise ValueError("affine chart needs 0 <= theta < pi/2")
    if r < 0:
        raise ValueError("r must be non-negative")
    return AffineState(x, r * math.cos(theta), math.tan(theta))


def affine_to_polar(s: AffineState) -> PolarState:
    x, z, E = s
    theta = math.atan(E)
    return PolarState(x, theta, z * math.hypot(1.0, E))


def polar_affine_roundtrip(s: PolarState) -> PolarState:
    return affine_to_polar(polar_to_affine(s))


def _h(sys: SlowFastSystem, x: float, z: float) -> float:
    f = sys.f(x, z)
    if not f > 0:
        raise ValueError(f"f({x}, {z}) = {f} is not positive; cannot divide by f")
    return sys.g(x, z) / f


def affine_rhs(sys: SlowFastSystem, s) -> np.ndarray:
    """Affine-chart field ``(E, h*z, -h*E)`` (time divided by ``z``)."""
    x, z, E = float(s[0]), float(s[1]), float(s[2])
    h = _h(sys, x, z)
    return np.array([E, h * z, -h * E])


def polar_rhs(sys: SlowFastSystem, s) -> np.ndarray:
    """Polar-chart field in state order ``(x', theta', r')`` (time divided by ``r``)."""
    x, theta, r = float(s[0]), float(s[1]), float(s[2])
    c, sn = math.cos(theta), math.sin(theta)
    h = _h(sys, x, r * c)
    return np.array([sn, -c * c * sn * h, r * c**3 * h])


def _h0(sys):
    return lambda x: _h(sys, x, 0.0)


def transition_X1(sys: SlowFastSystem, x0: float, E1: float = E1_DEFAULT) -> float:
    """Entry corner: ``x1`` with ``-int_{x0}^{x1} h(x, 0) dx = E1``."""
    if not E1 > 0:
        raise ValueError("E1 must be positive")
    h = _h0(sys)
    if not h(x0) < 0:
        raise ValueError("entry corner needs h(x0, 0) < 0")
    try:
        hit = first_level_crossing(h, x0, sys.domain.x_max, -E1, rising=False,
                                   stop_at_sign_change=True)
    except ExitNotFoundError as exc:
        raise ChartOverflowError(
            f"E1={E1} exceeds the attraction accumulated before the turning point "
            f"(max {-exc.phi_min:.6g})"
        ) from None
    if hit.at_boundary:
        warnings.warn(f"x1={hit.x} sits on the turning point: chart validity limit",
                      ChartBoundaryWarning, stacklevel=2)
    return hit.x


def transition_X2(sys: SlowFastSystem, x1: float) -> float:
    """Passage over the cylinder top: leftmost ``x2`` balancing ``int h(x, 0)``."""
    h = _h0(sys)
    if not h(x1) < 0:
        raise ValueError("x1 must lie where h(x, 0) < 0")
    x2 = first_level_crossing(h, x1, sys.domain.x_max, 0.0, rising=True).x
    if not h(x2) > 0:
        raise ValueError(f"balance point {x2} is not repelling")
    return x2


def transition_X3(sys: SlowFastSystem, x2: float, E1: float = E1_DEFAULT) -> float:
    """Exit corner: ``x3`` with ``int_{x2}^{x3} h(x, 0) dx = E1``."""
    if not E1 > 0:
        raise ValueError("E1 must be positive")
    h = _h0(sys)
    if not h(x2) > 0:
        raise ValueError("exit corner needs h(x2, 0) > 0")
    try:
        return first_level_crossing(h, x2, sys.domain.x_max, E1, rising=True).x
    except ExitNotFoundError:
        raise ChartOverflowError(f"E1={E1} not reached before x_max") from None


@dataclass(frozen=True)
class SingularOrbit:
    """Singular orbit from ``(x0, z0, 0)`` to ``(x3, z0, 0)`` in the affine chart.

    It drops along the fiber ``x = x0`` to the cylinder, then follows
    ``E(x) = -int_{x0}^{x} h(s, 0) ds`` inside ``z = 0`` through the corner
    points ``x1`` (rise to ``E1``), ``x2`` (back at ``E1``) and ``x3``
    (``E = 0``), and climbs the fiber ``x = x3``.
    """

    x0: float
    x1: float
    x2: float
    x3: float
    E1: float
    pieces: tuple = field(default=(), compare=False)

    def sample(self, sys: SlowFastSystem, n: int = 200, z0: float = 0.1) -> np.ndarray:
        """Points ``(x, z, E)`` along the orbit, fibers included."""
        from scipy.integrate import cumulative_simpson

        xs = np.linspace(self.x0, self.x3, 2 * n + 1)
        hs = np.asarray(sys.h(xs, np.zeros_like(xs)), dtype=float) * np.ones_like(xs)
        E = -cumulative_simpson(hs, x=xs, initial=0.0)
        E[-1] = 0.0
        fiber = np.linspace(z0, 0.0, n)
        down = np.column_stack([np.full(n, self.x0), fiber, np.zeros(n)])
        top = np.column_stack([xs, np.zeros_like(xs), np.maximum(E, 0.0)])
        up = np.column_stack([np.full(n, self.x3), fiber[::-1], np.zeros(n)])
        return np.vstack([down, top, up])

    def to_dict(self) -> dict:
        return {"x0": self.x0, "x1": self.x1, "x2": self.x2, "x3": self.x3,
                "E1": self.E1}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def singular_composition(sys: SlowFastSystem, x0: float,
                         E1: float = E1_DEFAULT) -> SingularOrbit:
    x1 = transition_X1(sys, x0, E1)
    x2 = transition_X2(sys, x1)
    x3 = transition_X3(sys, x2, E1)
    pieces = (
        ("fiber_in", x0, x0),
        ("rise", x0, x1),
        ("top", x1, x2),
        ("descent", x2, x3),
        ("fiber_out", x3, x3),
    )
    return SingularOrbit(x0, x1, x2, x3, E1, pieces)


@dataclass
class PipelineResult:
    x3: float
    x1: float
    x2: float
    z1: float
    z2: float
    E3: float
    E0: float
    E1: float
    z0: float
    eps: float
    max_conservation_error: float
    legs: list = field(default_factory=list, repr=False)  # three Trajectory objects

    @property
    def z1_expected(self) -> float:
        return self.E0 / self.E1 * self.z0


def affine_field(sys: SlowFastSystem):
    f, g = sys.f, sys.g

    def fld(y):
        x, z, E = y[0], y[1], y[2]
        h = g(x, z) / f(x, z)
        return np.array([E, h * z, -h * E])

    return fld


def _conservation(traj: Trajectory, eps: float) -> float:
    prod = traj.y[:, 1] * traj.y[:, 2]
    return float(np.max(np.abs(prod - eps)) / eps)


def affine_pipeline(sys: SlowFastSystem, x0: float, z0: float, eps: float,
                    E1: float = E1_DEFAULT, tol: Tolerances | None = None,
                    t_max: float = 1e6) -> PipelineResult:
    """Follow ``P3 o P2 o P1`` with true solutions of the affine-chart field.

    Starts at ``(x0, z0, eps/z0)``; P1 stops at ``E = E1``, P2 at the next
    crossing of ``E = E1`` with ``E`` decreasing, P3 at ``z = z0``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    E0 = eps / z0
    if not E0 < E1:
        raise ValueError(f"need eps/z0 < E1 (got {E0} >= {E1})")
    sys.domain.check(x0, z0)
    fld = affine_field(sys)
    d = sys.domain

    def stop_if(y):
        if y[0] > d.x_max:
            return "x_max"
        if y[0] < d.x_min:
            return "x_min"
        if y[1] > d.z_max:
            return "z_max"
        return None

    leg1 = integrate(fld, (x0, z0, E0), (0.0, t_max), tol,
                     EventSpec(lambda y: y[2] - E1, "rising"), stop_if)
    s1 = leg1.event_state
    leg2 = integrate(fld, s1, (0.0, t_max), tol,
                     EventSpec(lambda y: y[2] - E1, "falling", skip_initial=True), stop_if)
    s2 = leg2.event_state
    leg3 = integrate(fld, s2, (0.0, t_max), tol,
                     EventSpec(lambda y: y[1] - z0, "rising", skip_initial=True), stop_if)
    s3 = leg3.event_state
    cons = max(_conservation(leg, eps) for leg in (leg1, leg2, leg3))
    if cons > CONSERVATION_LIMIT:
        raise IntegrationQualityError(
            f"z*E drifted from eps by relative {cons:.3e} (limit {CONSERVATION_LIMIT})"
        )
    return PipelineResult(
        x3=float(s3[0]), x1=float(s1[0]), x2=float(s2[0]), z1=float(s1[1]),
        z2=float(s2[1]), E3=float(s3[2]), E0=E0, E1=E1, z0=z0, eps=eps,
        max_conservation_error=cons, legs=[leg1, leg2, leg3],
    )
