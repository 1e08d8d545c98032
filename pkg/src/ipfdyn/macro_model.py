"""Piecewise-linear information dynamic model ``x' = A (x + v)``.

On each extremal segment the control ``v = -2 x(tau0)`` is held constant, so
the state and the effective operator have closed forms::

    x(t)      = (2 I - exp(A t)) x(tau0)
    A_end(t)  = A exp(A t) (2 I - exp(A t))^{-1}

The segment ends when two state ratios ``x_i'/x_i`` meet (real spectrum) or
when the imaginary part of the mapped eigenvalue vanishes (complex
spectrum).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.linalg import expm

from .entropy import _inv_2b, hamiltonian_on_extremal  # noqa: F401  (re-exported)
from .errors import (
    DegenerateDiffusionError,
    IdentificationError,
    IllConditionedIdentificationError,
    NoSwitchFoundError,
    PoleError,
    UnsupportedDimensionError,
)
from .roots import first_root

POLE_TOL = 1e-12
IDENT_COND_LIMIT = 1e10


# ----------------------------------------------------------------------------
# types
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenPair:
    alpha: float
    beta: float = 0.0

    @property
    def gamma(self):
        return self.beta / self.alpha if self.alpha != 0 else math.inf

    @property
    def value(self):
        return complex(self.alpha, self.beta)

    @classmethod
    def from_complex(cls, lam):
        lam = complex(lam)
        return cls(lam.real, lam.imag)


def eigen_pairs(A):
    """Eigenvalues of ``A`` as :class:`EigenPair`, sorted by real then imaginary part."""
    lam = np.linalg.eigvals(np.atleast_2d(A))
    lam = sorted(lam, key=lambda z: (round(z.real, 12), round(z.imag, 12)))
    return [EigenPair.from_complex(z) for z in lam]


@dataclass
class MacroModel:
    A: np.ndarray
    x: np.ndarray
    v: np.ndarray | None = None
    tau_start: float = 0.0
    mode: str = "constraint_on"

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if self.v is None and self.mode == "constraint_on":
            self.v = synthesize_control(self.x)
        elif self.v is not None:
            self.v = np.atleast_1d(np.asarray(self.v, dtype=float))

    @property
    def n(self):
        return self.x.shape[0]

    def state(self, t):
        """State ``t`` after the segment start."""
        E = matrix_exp(self.A * t)
        y0 = self.x + (self.v if self.v is not None else 0.0)
        return E @ y0 - (self.v if self.v is not None else 0.0)

    def velocity(self, t):
        E = matrix_exp(self.A * t)
        y0 = self.x + (self.v if self.v is not None else 0.0)
        return self.A @ E @ y0


@dataclass
class PhasePortrait:
    I2: float
    I3: float
    classification: str
    singular_point: str
    rotation: float
    ctg_2theta: float
    coefficients: dict
    semi_axes: tuple | None = None
    center: tuple | None = None
    real_axis: int | None = None  # 1 or 2 for hyperbolas


# ----------------------------------------------------------------------------
# linear algebra helpers
# ----------------------------------------------------------------------------


def matrix_exp(M):
    """``exp(M)``; eigendecomposition for symmetric input, Pade otherwise."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if np.allclose(M, M.T, rtol=0, atol=1e-14 * max(1.0, abs(M).max())):
        w, U = np.linalg.eigh(0.5 * (M + M.T))
        return (U * np.exp(w)) @ U.T
    return expm(M)


# ----------------------------------------------------------------------------
# control synthesis and identification
# ----------------------------------------------------------------------------


def synthesize_control(x_at_tau):
    return -2.0 * np.asarray(x_at_tau, dtype=float)


def starting_state(r_s):
    """Nonrandom starting state from the initial covariance.

    Taken as the magnitudes of the diagonal of the symmetric square root of
    ``r_s``; this is the one place that choice lives.
    """
    r = np.atleast_2d(np.asarray(r_s, dtype=float))
    w, U = np.linalg.eigh(0.5 * (r + r.T))
    root = (U * np.sqrt(np.clip(w, 0, None))) @ U.T
    return np.abs(np.diag(root))


def starting_control(r_s, b_s):
    """Start-of-process state, control and operator.

    Returns ``(x, v, u, A)`` with ``v = -2x``, ``A = b r^{-1}`` and
    ``u = A v``.
    """
    r = np.atleast_2d(np.asarray(r_s, dtype=float))
    b = np.atleast_2d(np.asarray(b_s, dtype=float))
    if np.linalg.matrix_rank(r) < r.shape[0]:
        raise IdentificationError("initial covariance is singular")
    A = np.linalg.solve(r.T, b.T).T
    x = starting_state(r)
    v = synthesize_control(x)
    return x, v, A @ v, A


def identify_A(b_tau, r_tau, sign_mode="open_loop"):
    """Model operator from diffusion and covariance.

    ``open_loop`` returns ``b r^{-1}``; ``closed_loop`` returns
    ``-b r^{-1}``.
    """
    b = np.atleast_2d(np.asarray(b_tau, dtype=float))
    r = np.atleast_2d(np.asarray(r_tau, dtype=float))
    cond = np.linalg.cond(r)
    if not np.isfinite(cond) or cond > IDENT_COND_LIMIT:
        raise IllConditionedIdentificationError(
            f"covariance condition number {cond:.3g} exceeds {IDENT_COND_LIMIT:g}")
    R = np.linalg.solve(r.T, b.T).T
    if sign_mode == "open_loop":
        return R
    if sign_mode == "closed_loop":
        return -R
    raise ValueError(f"unknown sign_mode {sign_mode!r}")


# ----------------------------------------------------------------------------
# segment solution
# ----------------------------------------------------------------------------


def propagate_segment(A_start, x_start, t):
    if t < 0:
        raise ValueError("segment time must be non-negative")
    A = np.atleast_2d(np.asarray(A_start, dtype=float))
    x = np.atleast_1d(np.asarray(x_start, dtype=float))
    return (2.0 * np.eye(len(x)) - matrix_exp(A * t)) @ x


def eigenvalue_map(lambda_start, tau1):
    """``lam exp(lam t) / (2 - exp(lam t))`` for complex ``lam``."""
    lam = complex(lambda_start)
    e = np.exp(lam * tau1)
    d = 2.0 - e
    if abs(d) < POLE_TOL:
        raise PoleError(f"2 - exp(lambda*tau) vanishes at lambda={lam}, tau={tau1}")
    return complex(lam * e / d)


def matrix_end_of_segment(A_start, tau1):
    """Operator at the segment end and its control-side counterpart.

    Returns ``(A_end, Av_end)`` with ``Av_end = -A_end``.
    """
    A = np.atleast_2d(np.asarray(A_start, dtype=float))
    E = matrix_exp(A * tau1)
    M = 2.0 * np.eye(A.shape[0]) - E
    if abs(np.linalg.det(M)) < POLE_TOL * max(1.0, np.linalg.norm(E)) ** A.shape[0] \
            or np.linalg.cond(M) > 1e14:
        raise PoleError(f"2I - exp(A tau) is singular at tau={tau1}")
    A_end = np.linalg.solve(M.T, (A @ E).T).T
    return A_end, -A_end


# ----------------------------------------------------------------------------
# switching moments
# ----------------------------------------------------------------------------


def _ratio_gap(model, pair):
    i, j = pair
    y0 = model.x + model.v

    def f(t):
        E = matrix_exp(model.A * t)
        x = E @ y0 - model.v
        xd = model.A @ (E @ y0)
        norm = math.hypot(x[i], x[j]) * math.hypot(xd[i], xd[j])
        if norm == 0.0:
            return math.nan
        return (xd[i] * x[j] - xd[j] * x[i]) / norm

    return f


def detect_switch_ratio(model, t_max=2.0, pair=(0, 1), steps=10_000):
    """First time after the segment start where ``x_i'/x_i = x_j'/x_j``.

    The cross-multiplied gap is normalised to the sine of the angle between
    the velocity and the state in the ``(i, j)`` plane, which keeps it
    bounded while the state grows exponentially.
    """
    if model.n < 2:
        raise UnsupportedDimensionError("ratio switching needs at least two states")
    if model.mode != "constraint_on" or model.v is None:
        raise ValueError("ratio detector needs the constraint on (a held control)")
    f = _ratio_gap(model, pair)
    return first_root(f, t_max / steps * 1e-3, t_max, steps=steps, ftol=1e-12,
                      error=NoSwitchFoundError, what="state-ratio switch")


def detect_switch_imag(lambda_start, t_max=None, steps=10_000):
    """First ``tau > 0`` where ``Im eigenvalue_map(lam, tau) = 0``."""
    lam = complex(lambda_start)
    if lam.imag == 0:
        raise ValueError("imaginary-part detector needs a complex starting eigenvalue")
    if t_max is None:
        t_max = 2 * math.pi / abs(lam.imag)
    scale = abs(lam)

    def f(t):
        try:
            return eigenvalue_map(lam, t).imag / scale
        except PoleError:
            return math.nan

    return first_root(f, t_max / steps * 1e-3, t_max, steps=steps, ftol=1e-12,
                      error=NoSwitchFoundError, what="imaginary-part switch")


# ----------------------------------------------------------------------------
# sign flips, constraint and Hamiltonian
# ----------------------------------------------------------------------------


def column_flip(n, i):
    """Entries touched when the control of component ``i`` jumps: column ``i``."""
    return {(k, i) for k in range(n)}


def apply_sign_flip(A, flip_spec=None):
    """Negate the entries ``flip_spec`` (iterable of ``(row, col)``); all if ``None``.

    Returns the new matrix and its eigenvalues.
    """
    B = np.array(np.atleast_2d(A), dtype=float)
    if flip_spec is None:
        B = -B
    else:
        for r, c in flip_spec:
            B[r, c] = -B[r, c]
    return B, np.linalg.eigvals(B)


def constraint_residual(A, x, v, b, r_v=None):
    """Residual of the dynamic constraint ``dX/dx = -2 X X^T``.

    ``X = (2b)^{-1} A (x + v)``. With ``r_v`` given the expectation form
    ``(2b)^{-1} A r_v A^T (2b)^{-1}`` replaces the point form ``X X^T``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    W = _inv_2b(b)
    dX = W @ A
    if r_v is None:
        X = dX @ (np.atleast_1d(x) + np.atleast_1d(v))
        XX = np.outer(X, X)
    else:
        XX = dX @ np.atleast_2d(r_v) @ A.T @ W
    return dX + 2.0 * XX


def boundary_attracts(a_u, b, x0, x_tau, refinements=10, samples=1001):
    """Whether the boundary point ``x_tau`` attracts the scalar diffusion.

    ``R(x) = exp(-int_{x0}^{x} a/b dy)``; the boundary attracts when
    ``int R dx`` over ``[x0, x_tau]`` is finite. Finiteness is judged on the
    integrals up to ``x_tau - d_k`` with ``d_k`` shrinking tenfold: three
    consecutive increments each growing more than tenfold mean divergence.
    """
    x0, x_tau = float(x0), float(x_tau)
    if x0 == x_tau:
        return True
    ys = np.linspace(x0, x_tau, samples)
    bs = np.array([b(y) for y in ys])
    if np.any(~np.isfinite(bs)) or np.any(bs <= 0):
        k = int(np.argmax(~(np.isfinite(bs) & (bs > 0))))
        raise DegenerateDiffusionError(
            f"diffusion vanishes at y={ys[k]}; the functional is degenerate there")
    a_vals = np.array([a_u(y) for y in ys[:-1]])
    if np.all(a_vals == 0):
        warnings.warn("zero drift on the interval: no dynamics to attract", stacklevel=2)

    def R(x):
        val, _ = quad(lambda y: a_u(y) / b(y), x0, x, limit=200)
        return math.exp(-val)

    sgn = 1.0 if x_tau > x0 else -1.0
    span = abs(x_tau - x0)
    totals = []
    growth = 0
    with warnings.catch_warnings():
        # quad complains near a divergent endpoint; the growth test decides
        warnings.simplefilter("ignore", IntegrationWarning)
        for k in range(1, refinements + 1):
            end = x_tau - sgn * span * 10.0 ** (-k)
            val, _ = quad(R, x0, end, limit=200)
            val = abs(val)
            if not math.isfinite(val):
                return False
            if totals and val < totals[-1]:
                # R > 0, so a shrinking integral means quadrature lost accuracy
                break
            totals.append(val)
            if len(totals) >= 3:
                prev = totals[-2] - totals[-3]
                if prev > 0 and totals[-1] - totals[-2] > 10.0 * prev:
                    growth += 1
                    if growth >= 3:
                        return False
                else:
                    growth = 0
    return True


# ----------------------------------------------------------------------------
# phase plane (n = 2)
# ----------------------------------------------------------------------------


def conic_coefficients(A, v):
    """Second-order curve of the ratio equality ``x1'/x1 = x2'/x2``.

    Expanding ``x1 (A(x+v))_2 - x2 (A(x+v))_1 = 0`` gives
    ``c11 x1^2 + 2 c12 x1 x2 + c22 x2^2 + 2 c13 x1 + 2 c23 x2 + c33 = 0``.
    """
    a = np.atleast_2d(np.asarray(A, dtype=float))
    v1, v2 = np.asarray(v, dtype=float)
    return {
        "a11": a[1, 0],
        "a12": 0.5 * (a[1, 1] - a[0, 0]),
        "a22": -a[0, 1],
        "a13": 0.5 * (a[1, 0] * v1 + a[1, 1] * v2),
        "a23": -0.5 * (a[0, 0] * v1 + a[0, 1] * v2),
        "a33": 0.0,
    }


def _semi(k, coeff):
    return math.sqrt(k / abs(coeff)) if coeff != 0 else math.inf


def phase_portrait(A, v):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (2, 2):
        raise UnsupportedDimensionError("phase portraits are defined for n = 2 only")
    c = conic_coefficients(A, v)
    Q = np.array([[c["a11"], c["a12"]], [c["a12"], c["a22"]]])
    B = np.array([[c["a11"], c["a12"], c["a13"]],
                  [c["a12"], c["a22"], c["a23"]],
                  [c["a13"], c["a23"], c["a33"]]])
    I2 = float(c["a11"] * c["a22"] - c["a12"] ** 2)
    I3 = float(np.linalg.det(B))
    diff = c["a11"] - c["a22"]
    ctg = diff / (2 * c["a12"]) if c["a12"] != 0 else math.inf
    theta = 0.5 * math.atan2(2 * c["a12"], diff)
    mean = 0.5 * (c["a11"] + c["a22"])
    s2, c2 = math.sin(2 * theta), math.cos(2 * theta)
    a11r = mean + c["a12"] * s2 + 0.5 * diff * c2
    a22r = mean - c["a12"] * s2 - 0.5 * diff * c2
    scale = max(1.0, abs(B).max())
    zero3 = abs(I3) < 1e-12 * scale ** 3
    center = None
    semi = None
    if abs(I2) > 1e-14:
        center = tuple(np.linalg.solve(Q, -np.array([c["a13"], c["a23"]])))
    if I2 < 0:
        if zero3:
            cls = "asymptote_lines"
            semi = (_semi(1.0, a11r), _semi(1.0, a22r))
        else:
            cls = "hyperbola_pair"
            k = abs(I3 / I2)
            semi = (_semi(k, a11r), _semi(k, a22r))
    elif I2 > 0:
        cls = "ellipse_type"
    else:
        cls = "parabola_type"
    real_axis = None if cls != "hyperbola_pair" else (1 if I3 < 0 else 2)
    return PhasePortrait(I2, I3, cls, singular_point(A), theta, ctg,
                         {k: float(val) for k, val in c.items()}, semi, center, real_axis)


def singular_point(A):
    """Type of the origin of ``y' = A y``."""
    lam = np.linalg.eigvals(np.atleast_2d(A))
    if np.any(np.abs(lam.imag) > 1e-12):
        return "center" if np.all(np.abs(lam.real) < 1e-12) else "focus"
    re = lam.real
    if np.all(re > 0) or np.all(re < 0):
        return "knot"
    if np.any(re == 0):
        return "degenerate"
    return "saddle"


def phase_speed_jump(A_after, A_before, x_tau, x0):
    """Jump of ``x'`` at a switching moment.

    Before the switch ``x' = A_before (x - 2 x0)``; after it the new control
    ``-2 x_tau`` gives ``x' = -A_after x_tau``. The difference expands to
    ``-(A_after + A_before) x_tau + 2 A_before x0`` with the model state
    ``x_tau``.
    """
    Aa = np.atleast_2d(A_after)
    Ab = np.atleast_2d(A_before)
    return -(Aa + Ab) @ np.asarray(x_tau, dtype=float) + 2.0 * Ab @ np.asarray(x0, dtype=float)


def jump_matrix(A_after, A_before, tau1):
    """``K`` with ``phase_speed_jump = K x0`` when ``x_tau`` comes from ``x0``."""
    Aa = np.atleast_2d(A_after)
    Ab = np.atleast_2d(A_before)
    n = Ab.shape[0]
    return (Aa + Ab) @ (matrix_exp(Ab * tau1) - 2.0 * np.eye(n)) + 2.0 * Ab


# ----------------------------------------------------------------------------
# segment record
# ----------------------------------------------------------------------------


@dataclass
class SegmentRecord:
    k: int
    tau_start: float
    tau_end: float
    tau_dp: float
    A_start: np.ndarray
    A_end: np.ndarray
    Av_end: np.ndarray
    x_start: np.ndarray
    x_end: np.ndarray
    eig_start: list
    eig_end: list
    control_events: list = field(default_factory=list)
    invariants: object = None
    info_contribution: float = 0.0
    ef_nats: float | None = None
    ef_std_error: float | None = None
    A_identified: np.ndarray | None = None
    detector: str = ""
    terminal: bool = False
    residual_trace: list | None = None

    @property
    def duration(self):
        return self.tau_end - self.tau_start

    def to_dict(self):
        def conv(o):
            if isinstance(o, np.ndarray):
                return o.tolist()
            if isinstance(o, (np.floating, np.integer)):
                return o.item()
            if isinstance(o, EigenPair):
                return {"alpha": o.alpha, "beta": o.beta}
            if isinstance(o, dict):
                return {k: conv(v) for k, v in o.items()}
            if isinstance(o, (list, tuple)):
                return [conv(v) for v in o]
            if hasattr(o, "to_dict"):
                return o.to_dict()
            return o

        d = {}
        for name in self.__dataclass_fields__:
            d[name] = conv(getattr(self, name))
        d["duration"] = self.duration
        return d

    @classmethod
    def from_dict(cls, d):
        from .invariants import InvariantSet

        kw = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        for key in ("A_start", "A_end", "Av_end", "x_start", "x_end", "A_identified"):
            if kw.get(key) is not None:
                kw[key] = np.asarray(kw[key], dtype=float)
        for key in ("eig_start", "eig_end"):
            kw[key] = [EigenPair(e["alpha"], e["beta"]) for e in kw.get(key, [])]
        if isinstance(kw.get("invariants"), dict):
            kw["invariants"] = InvariantSet(**kw["invariants"])
        return cls(**kw)

