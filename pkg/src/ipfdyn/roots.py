"""Bracketing scan followed by Brent refinement."""
import numpy as np
from scipy.optimize import brentq

from .errors import NoRootError


def first_root(f, lo, hi, steps=10_000, xtol=1e-15, ftol=1e-10, error=NoRootError,
               what="root"):
    """Smallest root of ``f`` in ``(lo, hi]``.

    The interval is scanned on ``steps`` equal cells; the first sign change
    whose Brent refinement actually zeroes ``f`` (``|f| < ftol``) is
    returned. Sign changes across poles fail that test and are skipped.
    """
    grid = np.linspace(lo, hi, steps + 1)
    prev_t, prev_f = grid[0], f(grid[0])
    for t in grid[1:]:
        ft = f(t)
        if not np.isfinite(ft):
            prev_t, prev_f = t, ft
            continue
        if ft == 0.0:
            return float(t)
        if np.isfinite(prev_f) and np.sign(ft) != np.sign(prev_f) and prev_f != 0.0:
            root = brentq(f, prev_t, t, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)
            if abs(f(root)) < ftol:
                return float(root)
        prev_t, prev_f = t, ft
    raise error(f"no {what} found in ({lo}, {hi}]", bracket=(lo, hi))


def all_roots(f, lo, hi, steps=10_000, ftol=1e-10):
    """Every sign-change root of ``f`` on ``[lo, hi]`` (poles excluded)."""
    grid = np.linspace(lo, hi, steps + 1)
    vals = np.array([f(t) for t in grid])
    out = []
    for i in range(steps):
        a, b = vals[i], vals[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0.0:
            out.append(float(grid[i]))
        elif np.sign(a) != np.sign(b) and b != 0.0:
            r = brentq(f, grid[i], grid[i + 1], xtol=1e-15, maxiter=500)
            if abs(f(r)) < ftol:
                out.append(float(r))
    if vals[-1] == 0.0:
        out.append(float(grid[-1]))
    return out
