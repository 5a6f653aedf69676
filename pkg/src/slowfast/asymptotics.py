"""Regression on the asymptotic scale ``eps**k * (eps*log(eps))**l`` and the
``w -> exp(-1/w)`` reduction of the linear fast term to the quadratic one.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .entryexit import numerical_return, theoretical_exit
from .integrate import Tolerances
from .system import Domain, SlowFastSystem, flat_exp

__all__ = [
    "AsymptoticFit",
    "IllConditionedWarning",
    "LogTermResult",
    "KappaSystem",
    "scale_basis",
    "fit_scale",
    "detect_log_term",
    "default_ladder",
    "kappa",
    "z_to_w",
    "kappa_transform",
    "COND_LIMIT",
    "LOG_FLOOR",
]

COND_LIMIT = 1e12
LOG_FLOOR = 1e-6
W_MAX = 0.9
# integrator noise must sit well under LOG_FLOOR across the default ladder
DETECT_TOL = Tolerances(rel=1e-12, abs=1e-14)


class IllConditionedWarning(UserWarning):
    pass


def scale_basis(degree: int, include_constant: bool = True) -> list[tuple[int, int]]:
    """Exponent pairs ``(k, l)`` with ``k + l <= degree``, most dominant first.

    Terms of equal total power ``n = k + l`` are ordered by decreasing ``l``
    since each extra ``log`` factor dominates as ``eps -> 0``.
    """
    pairs = [(n - l, l) for n in range(degree + 1) for l in range(n, -1, -1)]
    if not include_constant:
        pairs.remove((0, 0))
    return pairs


def _design(eps: np.ndarray, basis) -> np.ndarray:
    el = eps * np.log(eps)
    return np.column_stack([eps**k * el**l for k, l in basis])


@dataclass(frozen=True)
class AsymptoticFit:
    basis: tuple[tuple[int, int], ...]
    coeffs: tuple[float, ...]
    residual_norm: float
    condition_estimate: float
    ill_conditioned: bool = False

    def coeff(self, k: int, l: int) -> float:
        try:
            return self.coeffs[self.basis.index((k, l))]
        except ValueError:
            return 0.0

    def __call__(self, eps):
        eps = np.asarray(eps, dtype=float)
        return _design(np.atleast_1d(eps), self.basis) @ np.array(self.coeffs)

    def to_dict(self) -> dict:
        return {
            "basis": [list(b) for b in self.basis],
            "coeffs": list(self.coeffs),
            "residual": self.residual_norm,
            "condition": self.condition_estimate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def fit_scale(samples: Sequence[tuple[float, float]], basis_degree: int = 2,
              include_constant: bool = True) -> AsymptoticFit:
    """Least-squares fit of ``y ~ sum a_kl eps**k (eps log eps)**l``.

    Columns are normalized and the system is solved through a QR
    factorization; ``condition_estimate`` is the 2-norm condition number of
    the normalized design matrix. Above ``COND_LIMIT`` an
    :class:`IllConditionedWarning` is issued and the coefficients are still
    returned.
    """
    basis = scale_basis(basis_degree, include_constant)
    eps = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples], dtype=float)
    if len(eps) < len(basis) + 2:
        raise ValueError(
            f"underdetermined: {len(eps)} samples for {len(basis)} basis functions "
            f"(need at least {len(basis) + 2})"
        )
    if np.any(eps <= 0) or np.any(eps >= math.exp(-1)):
        raise ValueError("eps samples must lie in (0, 1/e)")
    if len(np.unique(eps)) != len(eps):
        raise ValueError("eps samples must be distinct")

    X = _design(eps, basis)
    norms = np.linalg.norm(X, axis=0)
    Xs = X / norms
    Q, R = np.linalg.qr(Xs)
    c_scaled = np.linalg.solve(R, Q.T @ y)
    coeffs = c_scaled / norms
    resid = float(np.linalg.norm(y - X @ coeffs))
    cond = float(np.linalg.cond(R))
    ill = cond > COND_LIMIT
    if ill:
        warnings.warn(f"design matrix condition {cond:.3e} exceeds {COND_LIMIT:.0e}",
                      IllConditionedWarning, stacklevel=2)
    return AsymptoticFit(tuple(basis), tuple(float(c) for c in coeffs), resid, cond, ill)


def default_ladder(n: int = 12, lo: float = 1e-4, hi: float = 1e-2) -> list[float]:
    """``n`` log-spaced values from ``hi`` down to ``lo``."""
    return [float(e) for e in np.geomspace(hi, lo, n)]


@dataclass(frozen=True)
class LogTermResult:
    has_log: bool
    a01: float
    threshold: float
    fit: AsymptoticFit
    samples: tuple = field(default=(), repr=False)  # (eps, y) pairs
    p0: float = math.nan

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "y"])
        for e, y in self.samples:
            w.writerow([f"{e:.17g}", f"{y:.17g}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        d = self.fit.to_dict()
        d.update({"has_log": self.has_log, "a01": self.a01,
                  "threshold": self.threshold, "p0": self.p0,
                  "note": "decision threshold is an engineering choice"})
        return d


def detect_log_term(sys: SlowFastSystem, x0: float, z0: float,
                    eps_ladder: Sequence[float] | None = None,
                    tol: Tolerances | None = None,
                    degree: int = 2) -> LogTermResult:
    """Fit ``p_eps(x0) - p0(x0)`` on the scale and test the ``eps log eps`` term.

    The constant term is left out because the limit ``p0`` is subtracted.
    A log term is declared when ``|a01| > max(10 * residual_norm, 1e-6)``.
    """
    ladder = list(eps_ladder) if eps_ladder is not None else default_ladder()
    if len(ladder) < 8:
        raise ValueError("need at least 8 eps values")
    if math.log10(max(ladder) / min(ladder)) < 1.5 - 1e-12:
        raise ValueError("eps ladder must span at least 1.5 decades")
    tol = tol or DETECT_TOL
    p0 = theoretical_exit(sys, x0).p0
    samples = []
    for eps in ladder:
        p = numerical_return(sys, x0, z0, eps, tol).p_eps
        samples.append((float(eps), p - p0))
    fit = fit_scale(samples, degree, include_constant=False)
    a01 = fit.coeff(0, 1)
    threshold = max(10.0 * fit.residual_norm, LOG_FLOOR)
    return LogTermResult(abs(a01) > threshold, a01, threshold, fit, tuple(samples), p0)


# -- w = -1/log z reduction ------------------------------------------------

def kappa(w):
    """``exp(-1/w)`` for ``w > 0``, 0 at ``w = 0``."""
    return flat_exp(w)


def z_to_w(z: float) -> float:
    if not 0.0 < z < 1.0:
        raise ValueError("z must lie in (0, 1)")
    return -1.0 / math.log(z)


@dataclass(frozen=True)
class KappaSystem:
    base: SlowFastSystem
    transformed: SlowFastSystem

    @staticmethod
    def z_to_w(z: float) -> float:
        return z_to_w(z)

    @staticmethod
    def w_to_z(w: float) -> float:
        return float(kappa(w))


def kappa_transform(base: SlowFastSystem) -> KappaSystem:
    """Substitute ``z = kappa(w)`` in a system with linear fast term.

    The result has ``m = 2`` with ``f(x, kappa(w))`` and ``g(x, kappa(w))``;
    its ``w`` range is capped so that ``kappa(w)`` stays inside the base box.
    """
    if base.m != 1:
        raise ValueError(f"kappa_transform needs a system with m = 1, got m = {base.m}")
    f, g = base.f, base.g
    w_max = W_MAX
    if base.domain.z_max < 1.0:
        w_max = min(W_MAX, z_to_w(base.domain.z_max))
    transformed = SlowFastSystem(
        f=lambda x, w: f(x, kappa(w)),
        g=lambda x, w: g(x, kappa(w)),
        m=2,
        domain=Domain(base.domain.x_min, base.domain.x_max, w_max),
        params=dict(base.params),
        name=f"kappa[{base.name}]" if base.name else "kappa",
    )
    return KappaSystem(base, transformed)
