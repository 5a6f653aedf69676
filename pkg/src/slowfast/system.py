"""Planar slow-fast systems ``x' = eps*f(x, z)``, ``z' = g(x, z)*z**m``.

Systems are immutable. ``f`` and ``g`` are plain callables of ``(x, z)`` that
accept floats or numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "Domain",
    "SlowFastSystem",
    "DelayConditionReport",
    "SystemError_",
    "OutOfDomainError",
    "DegenerateSystemError",
    "UnknownSystemError",
    "flat_exp",
    "rhs",
    "check_conditions",
    "builtin",
    "CATALOG",
]

ScalarField = Callable[[object, object], object]

# exp(-1/z) underflows to 0 below ~1/745; anything under this is treated as 0.
Z_TINY = 1.0 / 700.0


class SystemError_(ValueError):
    """Base class for system-level errors."""


class OutOfDomainError(SystemError_):
    def __init__(self, coordinate: str, value: float, bounds: tuple[float, float]):
        self.coordinate = coordinate
        self.value = value
        self.bounds = bounds
        super().__init__(
            f"{coordinate}={value!r} outside domain [{bounds[0]}, {bounds[1]}]"
        )


class DegenerateSystemError(SystemError_):
    pass


class UnknownSystemError(SystemError_, KeyError):
    def __str__(self):
        return ValueError.__str__(self)


def flat_exp(z):
    """``exp(-1/z)`` for ``z > 0`` extended by 0 for ``z <= 0``.

    Works elementwise on arrays.
    """
    if np.ndim(z) == 0:
        z = float(z)
        return math.exp(-1.0 / z) if z > Z_TINY else 0.0
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    mask = z > Z_TINY
    out[mask] = np.exp(-1.0 / z[mask])
    return out


@dataclass(frozen=True)
class Domain:
    x_min: float
    x_max: float
    z_max: float

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("domain needs x_min < x_max")
        if not self.z_max > 0:
            raise ValueError("domain needs z_max > 0")

    def check(self, x: float, z: float) -> None:
        if not self.x_min <= x <= self.x_max:
            raise OutOfDomainError("x", x, (self.x_min, self.x_max))
        if not 0.0 <= z <= self.z_max:
            raise OutOfDomainError("z", z, (0.0, self.z_max))

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "z_max": self.z_max}


@dataclass(frozen=True)
class SlowFastSystem:
    """``x' = eps*f(x, z)``, ``z' = g(x, z) * z**m`` on a box domain.

    ``name`` and ``params`` identify catalog systems so they can be
    serialized; ad hoc systems may leave ``name`` empty.
    """

    f: ScalarField
    g: ScalarField
    m: int
    domain: Domain
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.m not in (1, 2):
            raise ValueError(f"fast exponent m must be 1 or 2, got {self.m}")

    def h(self, x, z):
        """Ratio ``g/f`` used by the entry-exit integral and the blow-up."""
        return self.g(x, z) / self.f(x, z)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": dict(self.params),
            "domain": self.domain.to_dict(),
        }


@dataclass(frozen=True)
class DelayConditionReport:
    entry_ok: bool
    exit_ok: bool
    sign_changes: tuple[float, ...]
    classical: bool
    x_entry: float
    x_exit: float

    def to_dict(self) -> dict:
        return {
            "entry_ok": self.entry_ok,
            "exit_ok": self.exit_ok,
            "sign_changes": list(self.sign_changes),
            "classical": self.classical,
            "x_entry": self.x_entry,
            "x_exit": self.x_exit,
        }


def rhs(sys: SlowFastSystem, state, eps: float) -> tuple[float, float]:
    """Vector field ``(eps*f, g*z**m)`` at ``state = (x, z)``."""
    x, z = float(state[0]), float(state[1])
    if eps < 0:
        raise ValueError("eps must be non-negative")
    sys.domain.check(x, z)
    dz = sys.g(x, z) * z**sys.m if z != 0.0 else 0.0
    return eps * sys.f(x, z), dz


def check_conditions(
    sys: SlowFastSystem, x_entry: float, x_exit: float, grid_n: int = 2001
) -> DelayConditionReport:
    """Sample ``g(., 0)`` on ``[x_entry, x_exit]`` and locate its sign changes.

    Roots are bracketed on ``grid_n`` points and refined by bisection to
    ``|dx| <= 1e-12``. A sign certificate for ``f(., 0) > 0`` is taken on the
    same grid. Only sign changes strictly inside the interval are reported.
    """
    if not x_entry < x_exit:
        raise ValueError("need x_entry < x_exit")
    sys.domain.check(x_entry, 0.0)
    sys.domain.check(x_exit, 0.0)
    if grid_n < 3:
        raise ValueError("grid_n must be at least 3")

    xs = np.linspace(x_entry, x_exit, grid_n)
    fs = np.asarray(sys.f(xs, np.zeros_like(xs)), dtype=float) * np.ones_like(xs)
    if not np.all(np.isfinite(fs)) or np.any(fs <= 0):
        raise DegenerateSystemError("f(x, 0) must be positive on the interval")
    gs = np.asarray(sys.g(xs, np.zeros_like(xs)), dtype=float) * np.ones_like(xs)
    if not np.all(np.isfinite(gs)):
        raise DegenerateSystemError("g(x, 0) not finite on the interval")
    zero = gs == 0.0
    if np.any(zero[:-1] & zero[1:]):
        i = int(np.flatnonzero(zero[:-1] & zero[1:])[0])
        raise DegenerateSystemError(
            f"g(x, 0) vanishes identically near [{xs[i]}, {xs[i + 1]}]"
        )

    def g0(x):
        return float(sys.g(x, 0.0))

    roots: list[float] = []
    sign_pattern: list[int] = []
    s = np.sign(gs)
    i = 0
    while i < grid_n - 1:
        if s[i] == 0.0:
            # exact grid hit; classify by neighbours
            if 0 < i and s[i - 1] * s[i + 1] < 0:
                roots.append(float(xs[i]))
                sign_pattern.append(int(s[i + 1]))
            i += 1
            continue
        if s[i] * s[i + 1] < 0:
            r = brentq(g0, xs[i], xs[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps)
            roots.append(float(r))
            sign_pattern.append(int(s[i + 1]))
        i += 1

    entry_ok = g0(x_entry) < 0
    exit_ok = g0(x_exit) > 0
    classical = entry_ok and exit_ok and len(roots) == 1 and sign_pattern == [1]
    return DelayConditionReport(
        entry_ok=entry_ok,
        exit_ok=exit_ok,
        sign_changes=tuple(roots),
        classical=classical,
        x_entry=float(x_entry),
        x_exit=float(x_exit),
    )


# -- catalog ---------------------------------------------------------------

MULTI_TURNING_ROOTS = (-0.8, 0.2, 0.9)


def _one(x, z):
    return 1.0 + 0.0 * x


def _example5(params, domain):
    alpha = float(params.get("alpha", 0.0))
    return SlowFastSystem(
        f=_one,
        g=lambda x, z: x + alpha * z,
        m=2,
        domain=domain or Domain(-2.0, 2.0, 2.0),
        params={"alpha": alpha},
        name="example5",
    )


def _symmetric_quadratic(params, domain):
    return SlowFastSystem(
        f=_one,
        g=lambda x, z: x + 0.0 * z,
        m=2,
        domain=domain or Domain(-2.0, 2.0, 0.2),
        params={},
        name="symmetric_quadratic",
    )


def _linear_case(params, domain):
    return SlowFastSystem(
        f=_one,
        g=lambda x, z: x + 0.0 * z,
        m=1,
        domain=domain or Domain(-2.0, 2.0, 0.2),
        params={},
        name="linear_case",
    )


def _flat_perturbed(params, domain):
    rho = float(params.get("rho", 1.0))

    def g(x, z):
        # rho(x) = rho*(2 + x) is bounded on the domain
        return x + rho * (2.0 + x) * flat_exp(z)

    return SlowFastSystem(
        f=_one,
        g=g,
        m=2,
        domain=domain or Domain(-2.0, 2.0, 0.2),
        params={"rho": rho},
        name="flat_perturbed",
    )


def _multi_turning(params, domain):
    scale = float(params.get("scale", 1.0))
    a, b, c = MULTI_TURNING_ROOTS

    def g(x, z):
        return scale * (x - a) * (x - b) * (x - c) + 0.0 * z

    return SlowFastSystem(
        f=_one,
        g=g,
        m=2,
        domain=domain or Domain(-1.5, 2.5, 0.2),
        params={"scale": scale},
        name="multi_turning",
    )


CATALOG = {
    "example5": _example5,
    "symmetric_quadratic": _symmetric_quadratic,
    "linear_case": _linear_case,
    "flat_perturbed": _flat_perturbed,
    "multi_turning": _multi_turning,
}

_PARAM_NAMES = {
    "example5": {"alpha"},
    "symmetric_quadratic": set(),
    "linear_case": set(),
    "flat_perturbed": {"rho"},
    "multi_turning": {"scale"},
}


def builtin(name: str, params: Mapping[str, float] | None = None,
            domain: Domain | Mapping | None = None, **kw) -> SlowFastSystem:
    """Build a catalog system by name.

    Parameters can be passed as a mapping or as keyword arguments, e.g.
    ``builtin("example5", alpha=0.1)``.
    """
    try:
        factory = CATALOG[name]
    except KeyError:
        raise UnknownSystemError(
            f"unknown system {name!r}; known: {', '.join(sorted(CATALOG))}"
        ) from None
    merged = dict(params or {})
    merged.update(kw)
    unknown = set(merged) - _PARAM_NAMES[name]
    if unknown:
        raise UnknownSystemError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    if isinstance(domain, Mapping):
        domain = Domain(**domain)
    return factory(merged, domain)


def from_dict(d: Mapping) -> SlowFastSystem:
    """Inverse of ``SlowFastSystem.to_dict`` for catalog systems."""
    extra = set(d) - {"name", "params", "domain"}
    if extra:
        raise ValueError(f"unknown system keys: {sorted(extra)}")
    return builtin(d["name"], d.get("params") or {}, d.get("domain"))
