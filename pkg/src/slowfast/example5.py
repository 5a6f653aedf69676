"""Closed forms for ``x' = eps``, ``z' = (x + alpha*z) z**2`` with section ``z = 1``.

For ``alpha = 0`` the solutions through ``(x0, 1)`` are explicit and return
at ``-x0``. The first-order correction in ``alpha`` is ``c(x0, eps)``, whose
expansion in ``eps`` carries an ``eps*log(eps)`` term with leading
coefficient ``2/x0**2``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable

from scipy.integrate import quad

from .entryexit import numerical_return
from .integrate import Tolerances
from .system import builtin

__all__ = [
    "PerturbationResult",
    "z0_exact",
    "z0_prime",
    "z1_exact",
    "c_closed",
    "c_from_z1",
    "q_coefficient",
    "c_via_finite_difference",
    "report_csv",
]

SECTION_Z = 1.0


def _denominator(x, x0, eps):
    d = 2.0 * eps + (x0 - x) * (x0 + x)
    if not d > 0:
        raise ValueError(
            f"2*eps + x0**2 - x**2 = {d} <= 0: x={x} is outside the solution's window"
        )
    return d


def z0_exact(x: float, x0: float, eps: float) -> float:
    """Unperturbed solution with ``z0(x0) = 1``."""
    return 2.0 * eps / _denominator(x, x0, eps)


def z0_prime(x: float, x0: float, eps: float) -> float:
    d = _denominator(x, x0, eps)
    return 4.0 * eps * x / (d * d)


def z1_exact(x: float, x0: float, eps: float) -> float:
    """First-order correction in ``alpha`` of the solution through ``(x0, 1)``.

    The inner integral is done by adaptive quadrature; its integrand peaks
    with height ``1/(2 eps)`` at ``s = +-x0``, which sit at the ends of the
    range of interest, where the adaptive rule concentrates its panels.
    """
    d = _denominator(x, x0, eps)
    if x == x0:
        return 0.0
    s2 = 2.0 * eps + x0 * x0
    inner, _ = quad(lambda s: 1.0 / (s2 - s * s), x0, x, epsabs=0.0, epsrel=1e-13,
                    limit=500)
    return 8.0 * eps * eps / (d * d) * inner


def c_closed(x0: float, eps: float) -> float:
    """``c(x0, eps) = (2 eps/x0) int_{x0}^{-x0} (2 eps + x0**2 - s**2)**-1 ds``.

    Evaluated through the partial-fraction antiderivative with
    ``S = sqrt(1 + 2 eps/x0**2)``: ``c = (2 eps/x0**2) * log((S-1)/(S+1)) / S``.
    """
    if not x0 < 0:
        raise ValueError("x0 must be negative")
    if not eps > 0:
        raise ValueError("eps must be positive")
    et = eps / (x0 * x0)
    S = math.sqrt(1.0 + 2.0 * et)
    s_minus_1 = 2.0 * et / (S + 1.0)  # avoids cancellation in S - 1
    return 2.0 * et * math.log(s_minus_1 / (S + 1.0)) / S


def c_from_z1(x0: float, eps: float) -> float:
    """``-z1(-x0) / z0'(-x0)``, the defining relation of ``c``."""
    return -z1_exact(-x0, x0, eps) / z0_prime(-x0, x0, eps)


def q_coefficient(x0: float, eps: float) -> float:
    """One valid analytic ``q`` with ``c - q*eps*log(eps)`` analytic.

    This is the explicit choice ``2/x0**2 * (1 + 2 eps/x0**2)**-1/2``; other
    representatives differ by analytic multiples of ``eps``.
    """
    return 2.0 / (x0 * x0) / math.sqrt(1.0 + 2.0 * eps / (x0 * x0))


@dataclass(frozen=True)
class PerturbationResult:
    x0: float
    eps: float
    c_closed: float
    c_fd: float
    alpha_used: float
    agreement: float
    p_plus: float = math.nan
    p_minus: float = math.nan

    def to_dict(self) -> dict:
        return {"x0": self.x0, "eps": self.eps, "c_closed": self.c_closed,
                "c_fd": self.c_fd, "alpha": self.alpha_used,
                "rel_err": self.agreement}


def c_via_finite_difference(x0: float, eps: float, alpha: float = 1e-3,
                            tol: Tolerances | None = None,
                            z0: float = SECTION_Z) -> PerturbationResult:
    """Centered difference in ``alpha`` of the simulated return map."""
    if alpha == 0:
        raise ValueError("alpha must be nonzero for a finite difference")
    alpha = abs(alpha)
    p_plus = numerical_return(builtin("example5", alpha=alpha), x0, z0, eps, tol).p_eps
    p_minus = numerical_return(builtin("example5", alpha=-alpha), x0, z0, eps, tol).p_eps
    c_fd = (p_plus - p_minus) / (2.0 * alpha)
    cc = c_closed(x0, eps)
    return PerturbationResult(x0, eps, cc, c_fd, alpha, abs(c_fd - cc) / abs(cc),
                              p_plus, p_minus)


def report_csv(results: Iterable[PerturbationResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x0", "eps", "c_closed", "c_fd", "rel_err"])
    for r in results:
        w.writerow([f"{v:.17g}" for v in (r.x0, r.eps, r.c_closed, r.c_fd, r.agreement)])
    return buf.getvalue()
