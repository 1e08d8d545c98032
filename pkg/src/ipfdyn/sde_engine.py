"""Controllable Ito diffusions: ensembles and moment estimates.

The system is ``dx = a(t, x, v) dt + sigma(t) dW`` integrated with a fixed
step Euler-Maruyama scheme. Paths are generated in fixed-size blocks, each
with its own Philox stream keyed by ``(master_seed, block)``, so an ensemble
depends only on the seed and never on how many workers produced it.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import (
    ConfigurationError,
    GridRangeError,
    InsufficientSampleError,
    SimulationError,
)

BLOCK_SIZE = 256


# ----------------------------------------------------------------------------
# evaluators
# ----------------------------------------------------------------------------


class LinearDrift:
    """Drift ``A (x + v)``; recognised by the compiled integrator."""

    def __init__(self, A):
        self.matrix = np.atleast_2d(np.asarray(A, dtype=float))

    def __call__(self, t, x, v):
        return (np.asarray(x) + np.asarray(v)) @ self.matrix.T

    def __repr__(self):
        return f"LinearDrift({self.matrix.tolist()})"


class ConstantDrift:
    """Drift that ignores state and control."""

    def __init__(self, a):
        self.value = np.atleast_1d(np.asarray(a, dtype=float))

    def __call__(self, t, x, v):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.value, x.shape).copy()


class ConstantSigma:
    def __init__(self, sigma):
        self.matrix = np.atleast_2d(np.asarray(sigma, dtype=float))

    def __call__(self, t):
        return self.matrix


class PiecewiseControl:
    """Piecewise-constant control ``v(t) = values[k]`` on ``[times[k], times[k+1])``.

    The last value is held after the final switching time. Before
    ``times[0]`` the control is zero.
    """

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if len(self.times) != len(self.values):
            raise ConfigurationError("control times and values differ in length")
        if np.any(np.diff(self.times) < 0):
            raise ConfigurationError("control switching times must be sorted")

    def __call__(self, t):
        k = np.searchsorted(self.times, t + 1e-12, side="right") - 1
        if k < 0:
            return np.zeros(self.values.shape[1])
        return self.values[k]

    @classmethod
    def constant(cls, v, t0=-math.inf):
        return cls([t0], [v])


def as_control(control, n):
    """Normalise ``None`` / vector / callable into a callable ``t -> (n,)``."""
    if control is None:
        zero = np.zeros(n)
        return lambda t: zero
    if callable(control):
        return control
    arr = np.asarray(control, dtype=float).reshape(n)
    return lambda t: arr


def diffusion_from_sigma(sigma_val):
    """Diffusion matrix ``b = sigma sigma^T / 2``."""
    s = np.atleast_2d(np.asarray(sigma_val, dtype=float))
    if s.shape[0] != s.shape[1]:
        raise ValueError(f"sigma must be square, got shape {s.shape}")
    b = 0.5 * s @ s.T
    return 0.5 * (b + b.T)


# ----------------------------------------------------------------------------
# data types
# ----------------------------------------------------------------------------


@dataclass
class SdeSystem:
    """Controllable Ito system.

    ``drift(t, x, v)`` receives batches: ``x`` and ``v`` are ``(m, n)`` and
    the result must be ``(m, n)``. ``sigma(t)`` returns ``(n, n)``; a
    constant array is accepted and wrapped.
    """

    n: int
    drift: Callable
    sigma: Callable
    init_mean: np.ndarray
    init_cov: np.ndarray
    t_span: tuple = (0.0, 1.0)

    def __post_init__(self):
        if not callable(self.sigma):
            self.sigma = ConstantSigma(self.sigma)
        self.init_mean = np.asarray(self.init_mean, dtype=float).reshape(self.n)
        self.init_cov = np.asarray(self.init_cov, dtype=float).reshape(self.n, self.n)
        if not np.allclose(self.init_cov, self.init_cov.T, atol=1e-12):
            raise ConfigurationError("init_cov must be symmetric")
        self.t_span = (float(self.t_span[0]), float(self.t_span[1]))

    def b(self, t):
        return diffusion_from_sigma(self.sigma(t))

    @classmethod
    def linear(cls, A, sigma, init_mean, init_cov, t_span=(0.0, 1.0)):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(A.shape[0], LinearDrift(A), sigma, init_mean, init_cov, t_span)


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    step: float
    count: int  # number of nodes

    @classmethod
    def from_step(cls, t0, t1, h):
        if not h > 0:
            raise ConfigurationError(f"grid step must be positive, got {h}")
        if t1 <= t0:
            raise ConfigurationError(f"empty grid [{t0}, {t1}]")
        steps = int(round((t1 - t0) / h))
        if steps < 1 or abs(steps * h - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
            raise ConfigurationError(f"step {h} does not divide [{t0}, {t1}]")
        return cls(float(t0), float(t0 + steps * h), float(h), steps + 1)

    @property
    def nodes(self):
        return self.t0 + self.step * np.arange(self.count)

    @property
    def steps(self):
        return self.count - 1

    def index_of(self, t):
        k = (t - self.t0) / self.step
        ki = int(round(k))
        if abs(k - ki) > 1e-6 or ki < 0 or ki >= self.count:
            raise GridRangeError(
                f"t={t} is not a node of the grid [{self.t0}, {self.t1}] step {self.step}"
            )
        return ki


@dataclass
class TrajectoryEnsemble:
    grid: TimeGrid
    paths: np.ndarray  # (m, count, n)
    master_seed: int | None = None
    block_size: int = BLOCK_SIZE
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.paths.shape[0]

    @property
    def n(self):
        return self.paths.shape[2]

    def stream_id(self, path_id):
        """``(master_seed, block, offset)`` of the noise stream of a path."""
        return (self.master_seed, path_id // self.block_size, path_id % self.block_size)

    def seed_record(self):
        return {
            "master_seed": self.master_seed,
            "block_size": self.block_size,
            "bit_generator": "Philox",
            "m": self.m,
            **self.meta,
        }

    def at(self, t):
        return self.paths[:, self.grid.index_of(t), :]

    # -- export -------------------------------------------------------------

    def to_csv(self, path):
        """Columnar CSV: ``t, path_id, x1..xn``, grouped by path."""
        t = self.grid.nodes
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "path_id"] + [f"x{i + 1}" for i in range(self.n)])
            for p in range(self.m):
                for k in range(self.grid.count):
                    w.writerow([repr(float(t[k])), p] + [repr(float(x)) for x in self.paths[p, k]])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = np.unique(data[:, 0])
        ids = data[:, 1].astype(int)
        m = ids.max() + 1
        n = data.shape[1] - 2
        paths = np.empty((m, len(t), n))
        paths[ids, np.searchsorted(t, data[:, 0])] = data[:, 2:]
        h = (t[-1] - t[0]) / (len(t) - 1) if len(t) > 1 else 1.0
        grid = TimeGrid(float(t[0]), float(t[-1]), float(h), len(t))
        return cls(grid, paths)

    def save(self, path):
        """Binary container (``.npz``) with the seed record embedded as JSON."""
        np.savez_compressed(
            path,
            paths=self.paths,
            grid=np.array([self.grid.t0, self.grid.t1, self.grid.step, self.grid.count]),
            seed_record=np.array(json.dumps(self.seed_record(), sort_keys=True)),
        )

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            t0, t1, h, count = z["grid"]
            rec = json.loads(str(z["seed_record"]))
            paths = z["paths"]
        meta = {k: v for k, v in rec.items()
                if k not in ("master_seed", "block_size", "bit_generator", "m")}
        return cls(TimeGrid(float(t0), float(t1), float(h), int(count)), paths,
                   rec["master_seed"], rec["block_size"], meta)


@dataclass
class MomentEstimates:
    t: float
    mean: np.ndarray
    r: np.ndarray
    r_dot: np.ndarray
    b_est: np.ndarray
    r_v: np.ndarray


# ----------------------------------------------------------------------------
# simulation
# ----------------------------------------------------------------------------


def _block_rng(master_seed, block):
    ss = np.random.SeedSequence(master_seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def _psd_factor(cov):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh(cov)
        if w.min() < -1e-12 * max(1.0, abs(w).max()):
            raise ConfigurationError("init_cov is not positive semidefinite")
        return U * np.sqrt(np.clip(w, 0.0, None))


def simulate_ensemble(system, grid, control=None, m=1000, master_seed=0,
                      workers=1, x0=None, backend=None, block_size=BLOCK_SIZE):
    """Sample ``m`` Euler-Maruyama paths of ``system`` on ``grid``.

    ``x0`` overrides the initial draw from ``N(init_mean, init_cov)`` with
    given ``(m, n)`` states (used to continue an ensemble). The result is a
    pure function of ``master_seed``: ``workers`` only changes wall time.
    """
    if m < 1:
        raise ConfigurationError(f"path count must be >= 1, got {m}")
    if not grid.step > 0:
        raise ConfigurationError(f"grid step must be positive, got {grid.step}")
    s, T = system.t_span
    tol = 1e-9 * max(1.0, abs(T))
    if grid.t0 < s - tol or grid.t1 > T + tol:
        raise ConfigurationError(
            f"grid [{grid.t0}, {grid.t1}] leaves the system span [{s}, {T}]")
    n = system.n
    vfun = as_control(control, n)
    t = grid.nodes
    V = np.array([np.asarray(vfun(tk), dtype=float).reshape(n) for tk in t])
    S = np.array([np.atleast_2d(system.sigma(tk)).reshape(n, n) for tk in t[:-1]])
    if not np.isfinite(S).all():
        k = int(np.argmax(~np.isfinite(S).reshape(len(S), -1).all(axis=1)))
        raise SimulationError(f"non-finite diffusion at t={t[k]}", t=float(t[k]))
    L = _psd_factor(system.init_cov)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).reshape(m, n)
    linear = isinstance(system.drift, LinearDrift)

    nblocks = (m + block_size - 1) // block_size

    def run_block(b):
        lo, hi = b * block_size, min(m, (b + 1) * block_size)
        rng = _block_rng(master_seed, b)
        z0 = rng.standard_normal((hi - lo, n))
        z = rng.standard_normal((hi - lo, grid.steps, n))
        start = system.init_mean + z0 @ L.T if x0 is None else x0[lo:hi]
        if linear:
            out, bad = kernels.em_linear(start, system.drift.matrix, V, S, z, grid.step,
                                         backend=backend)
        else:
            out, bad = _em_generic(system.drift, start, t, V, S, z, grid.step)
        if bad is not None:
            p, k = bad
            raise SimulationError(
                f"non-finite state on path {lo + p} at t={t[k]}", t=float(t[k]), path=lo + p)
        return out

    if workers <= 1 or nblocks == 1:
        blocks = [run_block(b) for b in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            blocks = list(ex.map(run_block, range(nblocks)))
    paths = np.concatenate(blocks, axis=0)
    return TrajectoryEnsemble(grid, paths, master_seed, block_size)


def _em_generic(drift, x0, t, V, S, z, h):
    m, n = x0.shape
    out = np.empty((m, len(t), n))
    out[:, 0] = x0
    x = x0.copy()
    sq = math.sqrt(h)
    for k in range(len(t) - 1):
        a = np.asarray(drift(t[k], x, np.broadcast_to(V[k], x.shape)), dtype=float)
        if not np.isfinite(a).all():
            p = int(np.argmin(np.isfinite(a).all(axis=1)))
            raise SimulationError(f"non-finite drift on path {p} at t={t[k]}",
                                  t=float(t[k]), path=p)
        x = x + a * h + sq * (z[:, k] @ S[k].T)
        out[:, k + 1] = x
        ok = np.isfinite(x).all(axis=1)
        if not ok.all():
            return out, (int(np.argmin(ok)), k + 1)
    return out, None


# ----------------------------------------------------------------------------
# moments
# ----------------------------------------------------------------------------


def _cov(x):
    c = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    return 0.5 * (c + c.T)


def estimate_moments(ensemble, t, control=None):
    """Sample moments of the ensemble at grid node ``t``.

    ``r`` is the unbiased covariance, ``r_dot`` its central difference
    (one-sided at the grid ends), ``b_est = r_dot / 2`` and ``r_v`` the
    second moment ``E[(x + v)(x + v)^T]`` with ``v = control(t)``.
    """
    if ensemble.m < 2:
        raise InsufficientSampleError(f"need at least 2 paths, got {ensemble.m}")
    g = ensemble.grid
    k = g.index_of(t)
    if g.count < 2:
        raise GridRangeError("grid has a single node; no derivative available")
    P = ensemble.paths
    r = _cov(P[:, k])
    if 0 < k < g.count - 1:
        r_dot = (_cov(P[:, k + 1]) - _cov(P[:, k - 1])) / (2 * g.step)
    elif k == 0:
        r_dot = (_cov(P[:, 1]) - r) / g.step
    else:
        r_dot = (r - _cov(P[:, k - 1])) / g.step
    v = as_control(control, ensemble.n)(g.nodes[k])
    y = P[:, k] + v
    r_v = y.T @ y / ensemble.m
    return MomentEstimates(
        t=float(g.nodes[k]),
        mean=P[:, k].mean(axis=0),
        r=r,
        r_dot=r_dot,
        b_est=0.5 * r_dot,
        r_v=0.5 * (r_v + r_v.T),
    )
