"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test records a PASS/FAIL line that the terminal summary prints.
"""
import hashlib
import math
import time

import numpy as np
import pytest
import sympy as sp
from scipy.integrate import quad

from ipfdyn.cli import main
from ipfdyn.config import load_builtin
from ipfdyn.dual import build_system, run_dual_strategy
from ipfdyn.entropy import (
    BITS_PER_NAT,
    ef_monte_carlo,
    gaussian_kl,
    gaussian_state_info,
    ipf_component_closed_form,
)
from ipfdyn.invariants import (
    connection_from_map,
    imaginary_invariant,
    invariant_connections,
    solve_a_o,
    solve_a_o_joint,
)
from ipfdyn.macro_model import (
    MacroModel,
    apply_sign_flip,
    column_flip,
    detect_switch_imag,
    detect_switch_ratio,
    eigenvalue_map,
    identify_A,
    jump_matrix,
    matrix_end_of_segment,
    phase_portrait,
    phase_speed_jump,
    propagate_segment,
)
from ipfdyn.network import build_network, consolidation_angle, rank_spectrum
from ipfdyn.sde_engine import ConstantDrift, SdeSystem, TimeGrid, estimate_moments, \
    simulate_ensemble
from tests.acceptance_log import record

A3 = np.array([[2.0, 3.0], [3.0, 10.0]])
X0 = np.array([1.0, 1.0])


def _tau1():
    return detect_switch_ratio(MacroModel(A3, X0))


def test_criterion_01_switch_root():
    t0 = time.perf_counter()
    tau = _tau1()
    elapsed = time.perf_counter() - t0
    ok = abs(tau - 0.7884) <= 5e-4 and elapsed < 1.0
    record(1, ok, f"switch root {tau:.10f} (target 0.7884 +/- 5e-4), {elapsed * 1e3:.1f} ms")
    assert ok


def test_criterion_02_negative_case():
    cfg = load_builtin("example3_negative")
    res = run_dual_strategy(build_system(cfg), cfg)
    tau = res.segments[0].duration
    lam1 = eigenvalue_map(-1.0, tau).real
    T = res.total_time
    ok = abs(tau - 0.193) <= 1e-3 and abs(lam1 + 0.701) <= 0.01 and abs(T - 1.187) <= 0.01
    record(2, ok, f"root {tau:.6f}, end eigenvalue {lam1:.6f}, total time {T:.6f}")
    assert ok


def test_criterion_03_identified_matrix_closed_forms():
    t = _tau1()
    e12, e11, e1 = math.exp(12 * t), math.exp(11 * t), math.exp(t)
    D = e12 - 2 * e11 - 2 * e1 + 4
    a11 = (2 * e12 - 2.2 * e11 - 1.8 * e1) / D
    a12 = 3 * (e12 - 2.2 * e11 + 0.2 * e1) / D
    a22 = (10 * e12 - 19.8 * e11 - 0.2 * e1) / D
    _, Av_end = matrix_end_of_segment(A3, t)
    ok = 10.9 <= a11 <= 11.1 and 10.9 <= a22 <= 11.1 and abs(a12) < 0.01
    agree = np.allclose(Av_end, [[a11, a12], [a12, a22]], rtol=1e-8, atol=1e-8)
    record(3, ok and agree, f"diag ({a11:.6f}, {a22:.6f}), off-diag {a12:.2e}; "
                            f"matches end operator: {agree}")
    assert ok and agree


def test_criterion_04_phase_speed_jump():
    t = _tau1()
    _, Av_end = matrix_end_of_segment(A3, t)
    jump = phase_speed_jump(Av_end, A3, propagate_segment(A3, X0, t), X0)
    K = jump_matrix(Av_end, A3, t)
    ref = np.array([51381.4, 154135.41])
    ok_jump = bool(np.all(np.abs(jump - ref) <= 0.01 * ref))
    ok_k = all(abs(K[i, j] - 38532.75) <= 0.01 * 38532.75 for i, j in ((0, 1), (1, 0)))
    rel = np.abs(jump - ref) / ref
    record(4, ok_jump and ok_k,
           f"jump ({jump[0]:.1f}, {jump[1]:.1f}) rel dev ({rel[0]:.1e}, {rel[1]:.1e}); "
           f"K12 {K[0, 1]:.2f} K21 {K[1, 0]:.2f}")
    assert ok_jump and ok_k


_C5 = {}


def test_criterion_05a_conic_invariants_exact():
    pp = phase_portrait(A3, -2 * X0)
    _C5["I2"], _C5["ctg"] = pp.I2, pp.ctg_2theta
    assert pp.I2 == -25.0
    assert pp.ctg_2theta == 0.75


@pytest.mark.xfail(strict=True, reason="the bordered determinant of this conic is "
                   "-(33v1^2 + 88v1v2 - 33v2^2)/4, which cannot equal the stated form")
def test_criterion_05b_conic_i3_symbolic():
    v1, v2 = sp.symbols("v1 v2")
    stated = -sp.Rational(1, 4) * (33 * v1**2 + 327 * v2**2 + 196 * v1 * v2)
    rng = np.random.default_rng(2024)
    mismatches = 0
    for v in rng.uniform(-10, 10, size=(100, 2)):
        computed = phase_portrait(A3, v).I3
        expected = float(stated.subs({v1: v[0], v2: v[1]}))
        if abs(computed - expected) > 1e-9 * max(1.0, abs(expected)):
            mismatches += 1
    exact = _C5.get("I2") == -25.0 and _C5.get("ctg") == 0.75
    record(5, exact and mismatches == 0,
           f"I2 {_C5.get('I2')}, ctg 2theta {_C5.get('ctg')}; I3 mismatches on "
           f"{mismatches}/100 random v (expected failure, see ledger)")
    assert mismatches == 0


def test_criterion_06_consolidation_angle():
    x_tau = propagate_segment(A3, X0, _tau1())
    phi = consolidation_angle(x_tau) / math.pi
    ok = abs(phi - math.atan(0.5) / math.pi) < 1e-3 and abs(phi - 0.1472) <= 1e-3
    record(6, ok, f"angle {phi:.6f} pi (target 0.1472 pi +/- 0.001 pi)")
    assert ok


def test_criterion_07_imaginary_invariants():
    beta = 1.0
    tau = detect_switch_imag(complex(0.0, beta))
    ts = np.linspace(1e-7, 2 * math.pi / beta, 2_000_001)
    e = np.exp(1j * beta * ts)
    im = (1j * beta * e / (2 - e)).imag
    k = int(np.argmax(np.sign(im[1:]) != np.sign(im[:-1])))
    scan = 0.5 * (ts[k] + ts[k + 1])
    coeff = eigenvalue_map(complex(0.0, beta), tau).real / beta
    inv = imaginary_invariant()
    ok = (abs(beta * tau - math.pi / 3) <= 1e-6 and abs(scan - tau) <= 1e-5
          and abs(coeff + 0.577) <= 1e-3 and inv.discrepancy)
    record(7, ok, f"beta*tau {beta * tau:.9f} (pi/3 {math.pi / 3:.9f}, scan {scan:.6f}); "
                  f"Re/beta {coeff:.6f}; printed pi/6 flagged")
    assert ok


def test_criterion_08_eigenvalue_oracle():
    A = np.array([[3.0, -2.0], [-4.0, 1.0]])
    lam = sorted(float(x) for x in np.linalg.eigvals(A).real)
    s = sp.symbols("s")
    printed = sp.Matrix([[-3, -2], [-4, 1]])
    roots = sorted(sp.solve(printed.charpoly(s).as_expr(), s), key=float)
    expected = [-1 - 2 * sp.sqrt(3), -1 + 2 * sp.sqrt(3)]
    symbolic = all(sp.simplify(r - e) == 0 for r, e in zip(roots, expected))
    numeric = np.allclose(sorted(np.linalg.eigvals(np.array(printed, dtype=float)).real),
                          [float(e) for e in expected], atol=1e-12)
    _, lam_col = apply_sign_flip(A, column_flip(2, 0))
    ok = np.allclose(lam, [-1.0, 5.0], atol=1e-12) and symbolic and numeric
    record(8, ok, f"sign-flip example eigenvalues {lam}; flipped -1 +/- 2sqrt3 (real, '2 +/- j' logged as "
                  f"discrepancy); column flip gives {np.round(lam_col, 9).tolist()}")
    assert ok


def test_criterion_09_invariant_solvers():
    lo, hi = 0.5, 2.0
    f = lambda a: 2 * a + 1 - math.exp(a)  # noqa: E731
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if (f(mid) > 0) == (f(lo) > 0) else (lo, mid)
    a0 = solve_a_o(0.0)
    sol = solve_a_o_joint(0.0)
    bits = (round(0.75 * BITS_PER_NAT, 3), round(0.25 * BITS_PER_NAT, 3))
    ok = (abs(a0 - 1.2564) <= 1e-4 and abs(a0 - lo) < 1e-12 and len(sol.roots) >= 1
          and bits == (1.082, 0.361))
    roots = ", ".join(f"{r.mapping}: ({r.a_o:.4f}, {r.a:.4f})" for r in sol.roots)
    record(9, ok, f"a_o(0) {a0:.10f} (bisection {lo:.10f}); joint roots [{roots}]; "
                  f"bits {bits}")
    assert ok


def test_criterion_10_connection_identity():
    rng = np.random.default_rng(10)
    worst = 0.0
    n = 0
    while n < 100:
        lam, tau = rng.uniform(-10, 10), rng.uniform(0.01, 3)
        if math.exp(lam * tau) >= 2 - 1e-3 or abs(lam * tau) > 30:
            continue
        i2 = invariant_connections(lam * tau)[1]
        worst = max(worst, abs(i2 - connection_from_map(lam, tau)) / max(1.0, abs(i2)))
        n += 1
    ok = worst <= 1e-9
    record(10, ok, f"max deviation {worst:.2e} over 100 pairs")
    assert ok


def test_criterion_11_ef_constant_coefficients():
    a, sigma, T = 0.8, 0.5, 1.0
    b = 0.5 * sigma**2
    expected = a * a * T / (4 * b)
    sysm = SdeSystem(1, ConstantDrift([a]), [[sigma]], [0.0], [[1.0]], (0.0, T))
    grid = TimeGrid.from_step(0.0, T, 0.02)
    t0 = time.perf_counter()
    passes = 0
    for seed in range(20):
        est = ef_monte_carlo(simulate_ensemble(sysm, grid, m=10_000, master_seed=seed),
                             sysm.drift, sysm.b)
        if abs(est.value - expected) <= max(3 * est.std_error, 1e-12 * expected):
            passes += 1
    elapsed = time.perf_counter() - t0
    ok = passes >= 19 and elapsed < 30
    record(11, ok, f"{passes}/20 seeds within 3 SE of {expected:.6f}; {elapsed:.1f} s")
    assert ok


def test_criterion_12_closed_loop_identification():
    A = -A3 / 4
    sigma = 0.1 * np.eye(2)
    r_stat = -0.5 * 0.01 * np.linalg.inv(A)
    sysm = SdeSystem.linear(A, sigma, [0.0, 0.0], r_stat)
    ens = simulate_ensemble(sysm, TimeGrid.from_step(0.0, 0.05, 0.005), m=100_000,
                            master_seed=12)
    mom = estimate_moments(ens, 0.025)
    A_id = identify_A(sysm.b(0.025), mom.r, "closed_loop")
    err = np.linalg.norm(A_id - A) / np.linalg.norm(A)
    ok = err < 0.05
    record(12, ok, f"relative Frobenius error {err:.4f} (m = 1e5, sigma = 0.1 I)")
    assert ok


def test_criterion_13_gaussian_measures():
    def r(t):
        return 1.0 + t * t + 0.3 * math.sin(3 * t)

    worst = 0.0
    for t0, t1 in ((0.0, 1.0), (0.5, 3.0), (2.0, 0.1)):
        val, _ = quad(lambda t: (2 * t + 0.9 * math.cos(3 * t)) / r(t) / 8.0, t0, t1,
                      epsabs=0, epsrel=1e-13)
        worst = max(worst, abs(ipf_component_closed_form(r(t0), r(t1)) - val) / abs(val))
    zero = gaussian_state_info(np.eye(4))
    rng = np.random.default_rng(13)
    min_kl = math.inf
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        Ma, Mb = rng.normal(size=(2, n, n))
        kl = gaussian_kl(Ma @ Ma.T + 0.1 * np.eye(n), Mb @ Mb.T + 0.1 * np.eye(n))
        min_kl = min(min_kl, kl)
    ok = worst <= 1e-8 and zero == 0.0 and min_kl >= 0.0
    record(13, ok, f"closed form vs quadrature {worst:.1e}; info(I) = {zero}; "
                   f"min KL over 1000 pairs {min_kl:.3e}")
    assert ok


def test_criterion_14_network():
    rng = np.random.default_rng(14)
    worst = 0.0
    for n in range(1, 101):
        alpha = rng.uniform(0.1, 20, n) * rng.choice([-1, 1], n)
        a_o = rng.uniform(0.1, 2.0, n)
        contrib = rng.uniform(0, 5, n)
        segs = [(al, ao / abs(al), ao, c) for al, ao, c in zip(alpha, a_o, contrib)]
        total = math.fsum(contrib)
        worst = max(worst, abs(build_network(segs).total_info - total) / total)
    duality = True
    for n in range(2, 101):
        alphas = rng.uniform(0.1, 50, n)
        r = rank_spectrum([(al, 0.7 / al, 0.7) for al in alphas])
        by_alpha = [e.index for e in r.entries]
        by_time = sorted(range(n), key=lambda i: 0.7 / alphas[i])
        duality &= by_alpha == by_time
    ok = worst <= 1e-12 and duality
    record(14, ok, f"max relative conservation error {worst:.1e}; duality {duality}")
    assert ok


def test_criterion_15_determinism(tmp_path, capsys):
    digests = {}
    for w in (1, 2, 8, 1):
        out = tmp_path / f"w{w}_{len(digests)}"
        code = main(["run", "--config", "stochastic_demo", "--workers", str(w),
                     "--out-dir", str(out)])
        assert code == 0
        h = hashlib.sha256()
        for p in sorted(out.iterdir()):
            h.update(p.name.encode())
            h.update(p.read_bytes())
        digests[(w, len(digests))] = h.hexdigest()
    capsys.readouterr()
    ok = len(set(digests.values())) == 1
    record(15, ok, f"artifact hashes across workers 1, 2, 8 and a rerun: "
                   f"{len(set(digests.values()))} distinct")
    assert ok
