"""Declarative scenario files (YAML).

Layout::

    scenario: name
    system:
      n: 2
      A0: [[2, 3], [3, 10]]      # starting operator; omit to identify from a pilot ensemble
      x0: [1, 1]                 # starting state; omit to derive from init_cov
      drift: [[...]]             # operator of the simulated process (defaults to A0)
      sigma: 0.0                 # scalar (times identity) or n x n matrix
      init_mean: [0, 0]
      init_cov: [[1, 0], [0, 1]]
    run:
      segments: 2
      detector: auto             # auto | ratio | imag
      identification: model      # model | ensemble
      sign_mode: open_loop       # open_loop | closed_loop
      t_max: 2.0
      seed: 7                    # required whenever paths are sampled
      ...
    output:
      ensemble_csv: false
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError

DETECTORS = ("auto", "ratio", "imag")
IDENT_MODES = ("model", "ensemble")
SIGN_MODES = ("open_loop", "closed_loop")


@dataclass
class SystemSpec:
    n: int
    A0: np.ndarray | None = None
    x0: np.ndarray | None = None
    drift: np.ndarray | None = None
    sigma: np.ndarray | None = None
    init_mean: np.ndarray | None = None
    init_cov: np.ndarray | None = None

    @property
    def stochastic(self):
        return self.sigma is not None and bool(np.any(self.sigma != 0))


@dataclass
class RunSpec:
    segments: int = 1
    detector: str = "auto"
    identification: str = "model"
    sign_mode: str = "open_loop"
    t_max: float = 2.0
    widen: int = 2
    pair: tuple = (0, 1)
    m: int = 2000
    step: float = 1e-3
    seed: int | None = None
    dp_step: float = 0.0
    pilot_t: float = 0.05
    ef: bool = True
    residual_trace: bool = False
    trace_points: int = 11
    workers: int = 1


@dataclass
class OutputSpec:
    ensemble_csv: bool = False


@dataclass
class ScenarioConfig:
    name: str
    system: SystemSpec
    run: RunSpec = field(default_factory=RunSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    source: str = "<dict>"

    @property
    def needs_sampling(self):
        return (self.system.stochastic or self.run.identification == "ensemble"
                or self.system.A0 is None)

    def to_dict(self):
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, tuple):
                return list(v)
            return v
        return {
            "scenario": self.name,
            "system": {k: conv(v) for k, v in vars(self.system).items()},
            "run": {k: conv(v) for k, v in vars(self.run).items()},
            "output": dict(vars(self.output)),
        }


# ----------------------------------------------------------------------------
# parsing
# ----------------------------------------------------------------------------


class _Locator:
    """Maps ``section.key`` paths to YAML line numbers for error messages."""

    def __init__(self, text, source):
        self.source = source
        self.lines = {}
        try:
            root = yaml.compose(text) if text else None
        except yaml.YAMLError:
            root = None
        if isinstance(root, yaml.MappingNode):
            self._walk(root, "")

    def _walk(self, node, prefix):
        for k, v in node.value:
            key = f"{prefix}{k.value}"
            self.lines[key] = k.start_mark.line + 1
            if isinstance(v, yaml.MappingNode):
                self._walk(v, key + ".")

    def error(self, key, msg):
        line = self.lines.get(key) or self.lines.get(key.split(".")[0])
        where = f"{self.source}:{line}" if line else self.source
        return ConfigurationError(f"{where}: field '{key}': {msg}")


def _matrix(loc, key, raw, n, square=True):
    if raw is None:
        return None
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise loc.error(key, "expected a numeric array") from None
    if square:
        if arr.ndim == 0:
            return float(arr) * np.eye(n)
        if arr.shape != (n, n):
            raise loc.error(key, f"expected {n}x{n}, got shape {arr.shape}")
    elif arr.shape != (n,):
        raise loc.error(key, f"expected length {n}, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise loc.error(key, "non-finite entries")
    return arr


def _choice(loc, key, val, options):
    if val not in options:
        raise loc.error(key, f"must be one of {', '.join(options)}; got {val!r}")
    return val


def _positive(loc, key, val, integer=False, allow_zero=False):
    ok_type = isinstance(val, int) if integer else isinstance(val, (int, float))
    if isinstance(val, bool) or not ok_type or not math.isfinite(val) \
            or (val < 0 if allow_zero else val <= 0):
        kind = "integer" if integer else "number"
        raise loc.error(key, f"expected a {'non-negative' if allow_zero else 'positive'} "
                             f"{kind}, got {val!r}")
    return val


def config_from_dict(data, source="<dict>", text=None):
    loc = _Locator(text, source)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: top level must be a mapping")
    unknown = set(data) - {"scenario", "system", "run", "output"}
    if unknown:
        raise loc.error(sorted(unknown)[0], "unknown section")
    sysd = data.get("system")
    if not isinstance(sysd, dict):
        raise loc.error("system", "missing or not a mapping")
    n = sysd.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise loc.error("system.n", f"expected a positive integer, got {n!r}")
    known = {"n", "A0", "x0", "drift", "sigma", "init_mean", "init_cov"}
    for k in sysd:
        if k not in known:
            raise loc.error(f"system.{k}", "unknown field")
    system = SystemSpec(
        n=n,
        A0=_matrix(loc, "system.A0", sysd.get("A0"), n),
        x0=_matrix(loc, "system.x0", sysd.get("x0"), n, square=False),
        drift=_matrix(loc, "system.drift", sysd.get("drift"), n),
        sigma=_matrix(loc, "system.sigma", sysd.get("sigma", 0.0), n),
        init_mean=_matrix(loc, "system.init_mean", sysd.get("init_mean", [0.0] * n), n,
                          square=False),
        init_cov=_matrix(loc, "system.init_cov", sysd.get("init_cov", 1.0), n),
    )
    if system.drift is None:
        system.drift = system.A0
    if system.A0 is None and system.drift is None:
        raise loc.error("system.A0", "either A0 or drift must be given")
    if not np.allclose(system.init_cov, system.init_cov.T):
        raise loc.error("system.init_cov", "must be symmetric")

    rund = data.get("run", {}) or {}
    if not isinstance(rund, dict):
        raise loc.error("run", "not a mapping")
    defaults = RunSpec()
    for k in rund:
        if not hasattr(defaults, k):
            raise loc.error(f"run.{k}", "unknown field")
    g = {**vars(defaults), **rund}
    run = RunSpec(
        segments=_positive(loc, "run.segments", g["segments"], integer=True),
        detector=_choice(loc, "run.detector", g["detector"], DETECTORS),
        identification=_choice(loc, "run.identification", g["identification"], IDENT_MODES),
        sign_mode=_choice(loc, "run.sign_mode", g["sign_mode"], SIGN_MODES),
        t_max=float(_positive(loc, "run.t_max", g["t_max"])),
        widen=_positive(loc, "run.widen", g["widen"], integer=True, allow_zero=True),
        pair=tuple(g["pair"]),
        m=_positive(loc, "run.m", g["m"], integer=True),
        step=float(_positive(loc, "run.step", g["step"])),
        seed=g["seed"],
        dp_step=float(_positive(loc, "run.dp_step", g["dp_step"], allow_zero=True)),
        pilot_t=float(_positive(loc, "run.pilot_t", g["pilot_t"])),
        ef=bool(g["ef"]),
        residual_trace=bool(g["residual_trace"]),
        trace_points=_positive(loc, "run.trace_points", g["trace_points"], integer=True),
        workers=_positive(loc, "run.workers", g["workers"], integer=True),
    )
    if len(run.pair) != 2 or not all(isinstance(i, int) and 0 <= i < n for i in run.pair) \
            or run.pair[0] == run.pair[1]:
        raise loc.error("run.pair", f"expected two distinct state indices below {n}")
    if run.seed is not None and (isinstance(run.seed, bool) or not isinstance(run.seed, int)
                                 or run.seed < 0):
        raise loc.error("run.seed", f"expected a non-negative integer, got {run.seed!r}")
    if run.m < 2 and (system.stochastic or run.identification == "ensemble"):
        raise loc.error("run.m", "at least 2 paths are needed for moment estimates")

    outd = data.get("output", {}) or {}
    if not isinstance(outd, dict):
        raise loc.error("output", "not a mapping")
    for k in outd:
        if k not in ("ensemble_csv",):
            raise loc.error(f"output.{k}", "unknown field")
    cfg = ScenarioConfig(
        name=str(data.get("scenario", Path(source).stem)),
        system=system,
        run=run,
        output=OutputSpec(ensemble_csv=bool(outd.get("ensemble_csv", False))),
        source=source,
    )
    if cfg.needs_sampling and run.seed is None:
        raise loc.error("run.seed", "a seed is mandatory for a scenario that samples paths")
    return cfg


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path}: invalid YAML: {e}") from None
    return config_from_dict(data, source=str(path), text=text)


def builtin_scenarios():
    return sorted(p.name[:-5] for p in resources.files("ipfdyn.scenarios").iterdir()
                  if p.name.endswith(".yaml"))


def load_builtin(name):
    res = resources.files("ipfdyn.scenarios").joinpath(f"{name}.yaml")
    if not res.is_file():
        raise ConfigurationError(
            f"unknown scenario {name!r}; available: {', '.join(builtin_scenarios())}")
    text = res.read_text()
    return config_from_dict(yaml.safe_load(text), source=f"{name}.yaml", text=text)
