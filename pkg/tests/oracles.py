"""Reference computations that share no code with the package.

They use plain numpy only: composite rules, dense grids and bisection.
"""
import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def simpson(h, a, b, panels=100_000):
    """Composite Simpson rule on ``panels`` (even) subintervals."""
    if panels % 2:
        panels += 1
    x = np.linspace(a, b, panels + 1)
    y = np.asarray(h(x), dtype=float) * np.ones_like(x)
    dx = (b - a) / panels
    return dx / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def gauss(h, a, b):
    """24-point Gauss-Legendre on ``[a, b]``."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    x = mid + half * _GL_X
    return half * float(np.dot(_GL_W, np.asarray(h(x), dtype=float) * np.ones_like(x)))


def bisect(fn, lo, hi, xtol=1e-14):
    flo = fn(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= xtol:
            break
    return 0.5 * (lo + hi)


def dense_scan_exit(h, x0, x_max, n=1_000_000):
    """Leftmost ``p > x0`` where ``int_{x0}^p h`` returns to 0 from below.

    The cumulative integral is a trapezoid cumsum on ``n`` points; the
    bracketing cell is refined by bisection with a local Gauss rule.
    """
    x = np.linspace(x0, x_max, n)
    y = np.asarray(h(x), dtype=float) * np.ones_like(x)
    phi = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))])
    idx = np.flatnonzero((phi[:-1] < 0) & (phi[1:] >= 0) & (np.arange(n - 1) > 0))
    if not len(idx):
        return None
    i = int(idx[0])
    lo, hi = x[i - 1], x[i + 2]
    base = gauss(h, x0, lo)
    return bisect(lambda p: base + gauss(h, lo, p), lo, hi)


def dense_scan_level(h, x0, x_max, level, n=1_000_000):
    """First ``x`` with ``int_{x0}^x h = level`` (any direction)."""
    x = np.linspace(x0, x_max, n)
    y = np.asarray(h(x), dtype=float) * np.ones_like(x)
    phi = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))]) - level
    idx = np.flatnonzero(np.sign(phi[:-1]) != np.sign(phi[1:]))
    if not len(idx):
        return None
    i = max(int(idx[0]), 1)
    lo, hi = x[i - 1], x[min(i + 2, n - 1)]
    base = gauss(h, x0, lo)
    return bisect(lambda p: base + gauss(h, lo, p) - level, lo, hi)
