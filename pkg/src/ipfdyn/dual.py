"""Dual identification and control loop over consecutive extremal segments."""
from __future__ import annotations

import contextlib
import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .entropy import ef_monte_carlo
from .errors import IdentificationError, IpfError, NoSwitchFoundError, PoleError
from .invariants import InvariantSet
from .macro_model import (
    EigenPair,
    MacroModel,
    SegmentRecord,
    constraint_residual,
    detect_switch_imag,
    detect_switch_ratio,
    eigen_pairs,
    eigenvalue_map,
    identify_A,
    matrix_end_of_segment,
    starting_control,
)
from .sde_engine import (
    LinearDrift,
    SdeSystem,
    TimeGrid,
    estimate_moments,
    simulate_ensemble,
)

log = logging.getLogger(__name__)

#: relative eigenvalue spread below which a spectrum counts as equalised
EQUALISED_TOL = 1e-6


@dataclass
class DualResult:
    segments: list
    x0: np.ndarray
    A0: np.ndarray
    ensembles: list = field(default_factory=list)

    @property
    def total_time(self):
        return self.segments[-1].tau_end if self.segments else 0.0

    @property
    def invariant_pairs(self):
        return [(s.invariants.a_o, s.invariants.a) for s in self.segments
                if s.invariants is not None and math.isfinite(s.invariants.a)]


@contextlib.contextmanager
def _phase(k, phase):
    try:
        yield
    except IpfError as e:
        if e.args and not str(e.args[0]).startswith("segment "):
            e.args = (f"segment {k} ({phase}): {e.args[0]}",) + e.args[1:]
        raise


def build_system(cfg):
    """Simulated process of a scenario: ``x' = D (x + v) + sigma W'``."""
    s = cfg.system
    return SdeSystem.linear(s.drift, s.sigma, s.init_mean, s.init_cov, t_span=(0.0, math.inf))


def _seed(master, k):
    ss = np.random.SeedSequence(master, spawn_key=(10_000 + k,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _dominant(pairs):
    return max(pairs, key=lambda e: (abs(e.alpha), e.beta))


def _equalised(A):
    lam = np.linalg.eigvals(A)
    spread = np.ptp(lam.real) + np.ptp(lam.imag)
    return spread <= EQUALISED_TOL * max(1.0, np.abs(lam).max())


def _is_zero_drift(system, x):
    a = system.drift(0.0, np.atleast_2d(x), np.zeros((1, system.n)))
    return not np.any(np.abs(a) > 0)


def _segment_grid(t0, length, h):
    # one node past the identification point so the derivative is central
    k = max(2, int(math.ceil(length / h - 1e-9)) + 1)
    return TimeGrid(t0, t0 + k * h, h, k + 1), t0 + (k - 1) * h


def _detect(model, run, k):
    """Switch time of the current segment and the detector that found it."""
    pairs = eigen_pairs(model.A)
    dom = _dominant(pairs)
    choice = run.detector
    if choice == "auto":
        choice = "imag" if dom.beta != 0 else "ratio"
    if model.n < 2 and choice == "ratio":
        raise NoSwitchFoundError("a single state has no ratio to equalise")
    if choice == "ratio" and _equalised(model.A):
        raise NoSwitchFoundError("spectrum already equalised; ratios coincide")
    t_max = run.t_max
    for attempt in range(run.widen + 1):
        try:
            if choice == "imag":
                lam = next((e for e in pairs if e.beta > 0), None)
                if lam is None:
                    raise NoSwitchFoundError("no complex eigenvalue for the imaginary detector")
                return detect_switch_imag(lam.value, t_max), choice
            return detect_switch_ratio(model, t_max, pair=run.pair), choice
        except NoSwitchFoundError:
            if attempt == run.widen:
                raise
            t_max *= 2
            log.info("segment %d: no switch in window, widening to %g", k, t_max)


def _ensemble_identify(system, run, x_start, control, t0, length, seed, b_eval):
    grid, t_id = _segment_grid(t0, length, run.step)
    local = dataclasses.replace(system, init_mean=x_start, t_span=(t0, math.inf))
    ens = simulate_ensemble(local, grid, control=control, m=run.m, master_seed=seed,
                            workers=run.workers)
    mom = estimate_moments(ens, t_id, control=control)
    A_id = identify_A(mom.b_est, mom.r, run.sign_mode)
    ef = None
    if run.ef and b_eval is not None:
        ef = ef_monte_carlo(ens, system.drift, b_eval, control=control,
                            window=(grid.t0, t_id))
    return A_id, ens, ef


def _pilot(system, run):
    grid, t_id = _segment_grid(system.t_span[0], run.pilot_t, run.step)
    ens = simulate_ensemble(system, grid, m=run.m, master_seed=_seed(run.seed, 0),
                            workers=run.workers)
    mom = estimate_moments(ens, t_id)
    return starting_control(mom.r, mom.b_est)


def run_dual_strategy(system, config):
    """Alternate macro-model prediction and identification over segments.

    Each segment holds the control ``v = -2 x`` from its start, propagates
    the closed-form model and stops at the first switching moment. At the
    following discrete point the operator is re-identified: from the model
    itself (``identification: model``, the needle-flipped end operator) or
    from fresh ensemble moments of ``system`` (``identification: ensemble``).
    An impulse joins two segments. When no further switch exists and the
    dominant rate is positive, a terminal segment of length ``ln 2 / rate``
    drives the state to the origin.
    """
    run = config.run
    sysdef = config.system
    stochastic = sysdef.stochastic
    b_eval = system.b(0.0) if stochastic else None

    with _phase(0, "start"):
        if sysdef.A0 is not None:
            A = np.array(sysdef.A0, dtype=float)
            if not np.any(A):
                raise IdentificationError(
                    "zero drift operator: the process has no dynamics to identify")
            x = np.array(sysdef.x0, dtype=float) if sysdef.x0 is not None else None
            if x is None:
                x = starting_control(system.init_cov, system.b(0.0) if stochastic
                                     else A @ system.init_cov)[0]
        else:
            if _is_zero_drift(system, np.ones(system.n)):
                raise IdentificationError(
                    "zero drift: the process has no dynamics to identify")
            x, _v, _u, A = _pilot(system, run)
    result = DualResult([], x.copy(), A.copy())

    tau = float(system.t_span[0]) if sysdef.A0 is None else 0.0
    for k in range(run.segments):
        model = MacroModel(A, x, tau_start=tau)
        eig_start = eigen_pairs(A)
        control = model.v
        try:
            with _phase(k, "detect"):
                t1, detector = _detect(model, run, k)
        except NoSwitchFoundError as e:
            seg = _terminal_segment(k, model, eig_start, str(e))
            if seg is not None:
                result.segments.append(seg)
            break
        with _phase(k, "propagate"):
            x_end = model.state(t1)
            A_end, Av_end = matrix_end_of_segment(A, t1)
        last = k == run.segments - 1
        tau_end = tau + t1
        tau_dp = tau_end + (0.0 if last else run.dp_step)
        events = [{"t": tau, "kind": "step_on"}, {"t": tau_end, "kind": "step_off"}]

        A_id, ef = None, None
        if run.identification == "ensemble" or stochastic:
            with _phase(k, "identify"):
                A_id, ens, ef = _ensemble_identify(
                    system, run, x, control, tau, tau_dp - tau, _seed(run.seed, k + 1),
                    b_eval)
                result.ensembles.append(ens)
        A_next = A_id if run.identification == "ensemble" else Av_end
        if not last:
            events.append({"t": tau_dp, "kind": "impulse"})

        dom = _dominant(eig_start)
        with _phase(k, "invariants"):
            lam_end = eigenvalue_map(dom.value, t1)
            inv = InvariantSet.from_segment(dom.value, lam_end, t1, tau)
        trace = None
        if run.residual_trace and b_eval is not None:
            ts = np.linspace(0.0, t1, run.trace_points)
            trace = [[float(tau + s),
                      float(np.linalg.norm(constraint_residual(A, model.state(s), control,
                                                                b_eval)))] for s in ts]
        result.segments.append(SegmentRecord(
            k=k, tau_start=tau, tau_end=tau_end, tau_dp=tau_dp,
            A_start=A.copy(), A_end=A_end, Av_end=Av_end,
            x_start=x.copy(), x_end=x_end,
            eig_start=eig_start, eig_end=eigen_pairs(A_end),
            control_events=events, invariants=inv, info_contribution=abs(inv.a_o),
            ef_nats=None if ef is None else ef.value,
            ef_std_error=None if ef is None else ef.std_error,
            A_identified=A_id, detector=detector, residual_trace=trace,
        ))
        if last:
            break
        A, x, tau = A_next, x_end, tau_dp
    return result


def _terminal_segment(k, model, eig_start, reason):
    """Final approach ``x(t) = (2 - e^{rate t}) x`` until the state vanishes."""
    rate = max(e.alpha for e in eig_start)
    log.info("segment %d: %s", k, reason)
    if not rate > 0:
        return None
    t = math.log(2.0) / rate
    x_end = model.state(t)
    dom = max(eig_start, key=lambda e: e.alpha)
    try:
        lam_end = eigenvalue_map(dom.value, t)
    except PoleError:
        # the state reaches the origin: the end eigenvalue is unbounded
        lam_end = complex(math.nan, 0.0)
    inv = InvariantSet.from_segment(dom.value, lam_end, t, model.tau_start)
    tau = model.tau_start
    return SegmentRecord(
        k=k, tau_start=tau, tau_end=tau + t, tau_dp=tau + t,
        A_start=model.A.copy(), A_end=np.full_like(model.A, np.nan),
        Av_end=np.full_like(model.A, np.nan), x_start=model.x.copy(), x_end=x_end,
        eig_start=eig_start, eig_end=[EigenPair(math.nan, 0.0) for _ in eig_start],
        control_events=[{"t": tau, "kind": "step_on"}, {"t": tau + t, "kind": "target"}],
        invariants=inv, info_contribution=abs(inv.a_o), detector="terminal", terminal=True,
    )
