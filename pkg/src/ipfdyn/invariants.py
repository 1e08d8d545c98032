"""Information invariants of an extremal segment.

For a starting eigenvalue ``lam0 = alpha0 + j beta0`` and a segment of
length ``t`` the dimensionless products ``alpha * t`` and ``beta * t`` stay
fixed across segments. The transcendental equations here pick out those
products; every solver re-substitutes its root and reports the residual.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .entropy import BITS_PER_NAT
from .errors import NoRootError, PoleError
from .macro_model import POLE_TOL, eigenvalue_map
from .roots import all_roots, first_root

log = logging.getLogger(__name__)

GAMMA_LIMIT = 1e-6
REFERENCE_JOINT_TARGET = (0.75, 0.25)


@dataclass
class InvariantSet:
    gamma: float
    a_o: float
    a: float
    a_degree: float = 0.0
    b_o: float = 0.0
    b_inv: float = 0.0
    i1: float = 0.0
    i2: float = 0.0
    i3: float = 0.0
    unstable: bool = False
    a_o_bits: float = 0.0
    a_bits: float = 0.0

    def to_dict(self):
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}

    @classmethod
    def from_segment(cls, lam_start, lam_end, duration, tau_start=0.0):
        """Invariants realised by a segment with the given start/end eigenvalues."""
        lam0 = complex(lam_start)
        lam1 = complex(lam_end)
        i3 = lam0.real * duration
        i2 = lam1.real * duration
        gamma = lam0.imag / lam0.real if lam0.real != 0 else math.inf
        return cls(
            gamma=gamma,
            a_o=i3,
            a=i2,
            a_degree=lam0.real * tau_start,
            b_o=lam0.imag * duration,
            b_inv=lam1.imag * duration,
            i1=0.5 * i2,
            i2=i2,
            i3=i3,
            unstable=i3 < 0,
            a_o_bits=i3 * BITS_PER_NAT,
            a_bits=i2 * BITS_PER_NAT,
        )


# ----------------------------------------------------------------------------
# a_o(gamma)
# ----------------------------------------------------------------------------


def a_o_equation(gamma, a):
    """``2 sin(g a) + g cos(g a) - g exp(a)``."""
    return 2 * math.sin(gamma * a) + gamma * math.cos(gamma * a) - gamma * math.exp(a)


def _a_o_scaled(gamma):
    # the equation divided by gamma; continuous down to gamma = 0
    if gamma < GAMMA_LIMIT:
        return lambda a: 2 * a + 1 - math.exp(a)
    return lambda a: 2 * math.sin(gamma * a) / gamma + math.cos(gamma * a) - math.exp(a)


def a_o_residual(gamma, a):
    return abs(_a_o_scaled(gamma)(a)) if gamma < GAMMA_LIMIT else abs(a_o_equation(gamma, a))


def solve_a_o(gamma, a_max=10.0, steps=20_000):
    """Smallest positive root ``a_o`` of the segment invariant equation.

    ``a = 0`` always solves the equation and is excluded. Below
    ``gamma = 1e-6`` the limit ``2a + 1 - exp(a) = 0`` is solved instead.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    f = _a_o_scaled(gamma)
    return first_root(f, a_max / steps, a_max, steps=steps, ftol=1e-12,
                      what=f"a_o root for gamma={gamma}")


def solve_a_o_all(gamma, a_max=10.0, steps=20_000):
    f = _a_o_scaled(gamma)
    return [r for r in all_roots(f, a_max / steps, a_max, steps=steps, ftol=1e-12) if r > 0]


# ----------------------------------------------------------------------------
# joint solve with the invariant connection
# ----------------------------------------------------------------------------


def invariant_connections(i3):
    """``(i1, i2)`` from ``i3``: ``i2 = i3 e^{i3} / (2 - e^{i3})``, ``i1 = i2 / 2``."""
    e = math.exp(i3)
    if abs(2.0 - e) < POLE_TOL:
        raise PoleError(f"connection has a pole at i3 = ln 2 (got {i3})")
    i2 = i3 * e / (2.0 - e)
    return 0.5 * i2, i2


def _connection(x):
    return x * math.exp(x) / (2.0 - math.exp(x))


@dataclass
class JointRoot:
    a_o: float
    a: float
    mapping: str
    residual: float

    @property
    def bits(self):
        return (self.a_o * BITS_PER_NAT, self.a * BITS_PER_NAT)


@dataclass
class JointSolution:
    gamma: float
    roots: list = field(default_factory=list)
    chosen: JointRoot | None = None
    target: tuple = REFERENCE_JOINT_TARGET

    @property
    def distance_to_target(self):
        if self.chosen is None:
            return math.inf
        return math.hypot(self.chosen.a_o - self.target[0], self.chosen.a - self.target[1])


def solve_a_o_joint(gamma, a_max=10.0):
    """Pair ``(a_o, a)`` from the segment equation and the invariant connection.

    ``a_o`` comes from the segment equation (every positive root in
    ``(0, a_max]``). The connection ``i2 = i3 e^{i3}/(2 - e^{i3})`` with
    ``i1 = i2/2`` then fixes ``a`` under each admissible assignment of the
    roles:

    ``seg=i3, ctl=i1``  a = i2(a_o) / 2
    ``seg=i3, ctl=i2``  a = i2(a_o)
    ``seg=i2, ctl=i3``  a solves i2(a) = a_o
    ``seg=i2, ctl=i1``  a = a_o / 2

    All roots are logged; the one closest to (0.75, 0.25) is tagged as
    chosen.
    """
    sol = JointSolution(gamma)
    for a_o in solve_a_o_all(gamma, a_max):
        cands = []
        if abs(2 - math.exp(a_o)) > POLE_TOL:
            i2 = _connection(a_o)
            cands.append(("seg=i3,ctl=i1", 0.5 * i2, 0.0))
            cands.append(("seg=i3,ctl=i2", i2, 0.0))
        cands.append(("seg=i2,ctl=i1", 0.5 * a_o, 0.0))
        # i2(a) is increasing on (0, ln 2) from 0 to +inf
        try:
            a_inv = first_root(lambda a: _connection(a) - a_o, 1e-12, math.log(2) - 1e-12,
                               steps=2000, ftol=1e-9 * max(1.0, a_o))
            cands.append(("seg=i2,ctl=i3", a_inv, abs(_connection(a_inv) - a_o)))
        except NoRootError:
            pass
        for mapping, a, res in cands:
            res = max(res, a_o_residual(gamma, a_o))
            root = JointRoot(a_o, a, mapping, res)
            sol.roots.append(root)
            log.info("joint root gamma=%g: a_o=%.6f a=%.6f (%s) residual=%.2e",
                     gamma, a_o, a, mapping, res)
    if not sol.roots:
        raise NoRootError(f"no joint root for gamma={gamma}", bracket=(0.0, a_max))
    sol.chosen = min(sol.roots, key=lambda r: math.hypot(r.a_o - REFERENCE_JOINT_TARGET[0],
                                                         r.a - REFERENCE_JOINT_TARGET[1]))
    return sol


# ----------------------------------------------------------------------------
# imaginary-part invariants
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ImaginaryInvariant:
    theta: float  # beta * tau at the switch
    re_coeff: float  # Re lam(tau) / beta at the switch
    theta_printed: float = math.pi / 6
    discrepancy: bool = True


def imaginary_invariant():
    """Switch of a purely imaginary start: ``2 cos(theta) - 1 = 0``.

    ``theta = pi/3``; the real part there is ``-2 sin(theta)/(5 - 4 cos theta)``
    times beta, i.e. ``-sqrt(3)/3``. The printed ``pi/6`` is kept as a
    flagged alternative.
    """
    theta = math.pi / 3
    re = -2 * math.sin(theta) / (5 - 4 * math.cos(theta))
    return ImaginaryInvariant(theta, re)


def zero_real_invariant(gamma, b_max=5.0, steps=20_000):
    """Smallest positive root of ``2 cos(g b) - g sin(g b) - exp(b) = 0``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")

    def f(b):
        return 2 * math.cos(gamma * b) - gamma * math.sin(gamma * b) - math.exp(b)

    return first_root(f, b_max / steps, b_max, steps=steps, ftol=1e-12,
                      what=f"zero-real invariant for gamma={gamma}")


def balance_check(a_o, a_degree, a_ctrl):
    """Deviation ``| |a_o - a_degree| - 2 a_ctrl |`` of the control balance."""
    return abs(abs(a_o - a_degree) - 2 * a_ctrl)


def segment_interval(alpha_start, a_o):
    if alpha_start == 0:
        raise ZeroDivisionError("segment interval undefined for zero starting real part")
    return a_o / alpha_start


def connection_from_map(lam, tau):
    """``lam1 * tau`` via the eigenvalue map; equals ``i2`` for ``i3 = lam * tau``."""
    return (eigenvalue_map(lam, tau) * tau).real


# ----------------------------------------------------------------------------
# gamma table
# ----------------------------------------------------------------------------


@dataclass
class GammaRow:
    gamma: float
    a_o: float
    a: float
    residual: float
    converged: bool
    mapping: str = ""


@dataclass
class GammaTable:
    rows: list

    @property
    def all_converged(self):
        return all(r.converged for r in self.rows)

    def to_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gamma", "a_o", "a", "residual", "converged", "mapping"])
        for r in self.rows:
            w.writerow([repr(r.gamma), repr(r.a_o), repr(r.a), repr(r.residual),
                        int(r.converged), r.mapping])


def _row(gamma):
    gamma = float(gamma)
    try:
        a_o = solve_a_o(gamma)
        sol = solve_a_o_joint(gamma)
        # keep the smallest-root convention for a_o, pair it with its connection
        match = [r for r in sol.roots if r.a_o == a_o and r.mapping == sol.chosen.mapping]
        a = match[0].a if match else math.nan
        res = float(a_o_residual(gamma, a_o))
        return GammaRow(gamma, a_o, a, res, res < 1e-10, sol.chosen.mapping)
    except (NoRootError, PoleError):
        return GammaRow(gamma, math.nan, math.nan, math.nan, False)


def gamma_table(gamma_max, rows, workers=1):
    if rows < 1:
        raise ValueError("rows must be >= 1")
    gammas = np.linspace(0.0, gamma_max, rows) if rows > 1 else np.array([0.0])
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(_row, gammas))
    else:
        out = [_row(g) for g in gammas]
    return GammaTable(out)
