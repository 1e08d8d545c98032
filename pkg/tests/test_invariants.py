import io
import logging
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from ipfdyn.entropy import BITS_PER_NAT
from ipfdyn.errors import PoleError
from ipfdyn.invariants import (
    GAMMA_LIMIT,
    InvariantSet,
    a_o_equation,
    a_o_residual,
    balance_check,
    connection_from_map,
    gamma_table,
    imaginary_invariant,
    invariant_connections,
    segment_interval,
    solve_a_o,
    solve_a_o_all,
    solve_a_o_joint,
    zero_real_invariant,
)
from ipfdyn.macro_model import eigenvalue_map


def _bisect(f, lo, hi, n=200):
    flo = f(lo)
    for _ in range(n):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_gamma_zero_limit_root_bisection_oracle():
    ref = _bisect(lambda a: 2 * a + 1 - math.exp(a), 0.5, 2.0)
    assert solve_a_o(0.0) == pytest.approx(ref, abs=1e-12)
    assert abs(solve_a_o(0.0) - 1.2564) <= 1e-4


@pytest.mark.parametrize("gamma", [0.5, 1.0, 5.0])
def test_root_against_mpmath(gamma):
    mp.mp.dps = 30
    g = mp.mpf(gamma)
    f = lambda a: 2 * mp.sin(g * a) / g + mp.cos(g * a) - mp.e**a  # noqa: E731
    a = solve_a_o(gamma)
    assert a == pytest.approx(float(mp.findroot(f, a)), abs=1e-11)
    assert a_o_residual(gamma, a) < 1e-10
    assert abs(a_o_equation(gamma, a)) < 1e-10


def test_limit_is_continuous():
    a0 = solve_a_o(0.0)
    assert solve_a_o(0.5 * GAMMA_LIMIT) == a0
    assert solve_a_o(2 * GAMMA_LIMIT) == pytest.approx(a0, abs=1e-5)


def test_zero_root_excluded_and_negative_gamma():
    assert all(r > 0 for r in solve_a_o_all(0.5))
    assert solve_a_o_all(0.0)[0] == solve_a_o(0.0)
    with pytest.raises(ValueError):
        solve_a_o(-0.1)


def test_table_is_monotone_decreasing():
    tab = gamma_table(5.0, 11)
    a = [r.a_o for r in tab.rows]
    assert tab.all_converged
    assert all(x > y for x, y in zip(a, a[1:]))
    assert tab.rows[0].a_o == pytest.approx(1.2564312086261695, abs=1e-12)


def test_table_workers_and_csv():
    one = gamma_table(2.0, 5)
    many = gamma_table(2.0, 5, workers=4)
    assert one.rows == many.rows
    buf = io.StringIO()
    one.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "gamma,a_o,a,residual,converged,mapping"
    assert len(lines) == 6
    assert float(lines[1].split(",")[0]) == 0.0
    assert len(gamma_table(1.0, 1).rows) == 1
    with pytest.raises(ValueError):
        gamma_table(1.0, 0)


def test_joint_solve_logs_all_roots(caplog):
    with caplog.at_level(logging.INFO, logger="ipfdyn.invariants"):
        sol = solve_a_o_joint(0.0)
    mappings = {r.mapping for r in sol.roots}
    assert mappings == {"seg=i3,ctl=i1", "seg=i3,ctl=i2", "seg=i2,ctl=i1", "seg=i2,ctl=i3"}
    assert sum("joint root" in m for m in caplog.messages) == len(sol.roots)
    for r in sol.roots:
        assert r.a_o == pytest.approx(1.2564312086261695)
        assert r.residual < 1e-9
    by = {r.mapping: r.a for r in sol.roots}
    i1, i2 = invariant_connections(sol.roots[0].a_o)
    assert by["seg=i3,ctl=i1"] == pytest.approx(i1)
    assert by["seg=i3,ctl=i2"] == pytest.approx(i2)
    assert by["seg=i2,ctl=i1"] == pytest.approx(0.5 * sol.roots[0].a_o)
    assert invariant_connections(by["seg=i2,ctl=i3"])[1] == pytest.approx(sol.roots[0].a_o)
    assert sol.chosen.mapping == "seg=i2,ctl=i3"
    # no admissible mapping reaches (0.75, 0.25)
    assert sol.distance_to_target > 0.1


def test_bit_conversions():
    assert round(0.75 * BITS_PER_NAT, 3) == 1.082
    assert round(0.25 * BITS_PER_NAT, 3) == 0.361
    assert round(0.75 * BITS_PER_NAT) == 1
    assert round(0.25 * BITS_PER_NAT, 2) == pytest.approx(0.36)


def test_connections():
    i1, i2 = invariant_connections(-0.193)
    assert i2 == pytest.approx(-0.135366, abs=1e-6)
    assert i1 == 0.5 * i2
    with pytest.raises(PoleError):
        invariant_connections(math.log(2.0))


@given(lam=st.floats(-20, 20), tau=st.floats(1e-3, 5))
def test_connection_identity(lam, tau):
    x = lam * tau
    assume(math.exp(x) < 2 - 1e-6 and abs(x) < 30)
    assert invariant_connections(x)[1] == pytest.approx(connection_from_map(lam, tau),
                                                        rel=1e-9, abs=1e-12)


def test_imaginary_invariant():
    inv = imaginary_invariant()
    assert inv.theta == pytest.approx(math.pi / 3)
    assert inv.re_coeff == pytest.approx(-1 / math.sqrt(3))
    assert inv.discrepancy and inv.theta_printed == pytest.approx(math.pi / 6)
    beta = 2.5
    lam1 = eigenvalue_map(complex(0, beta), inv.theta / beta)
    assert lam1.imag == pytest.approx(0.0, abs=1e-12)
    assert lam1.real / beta == pytest.approx(inv.re_coeff, rel=1e-12)


def test_zero_real_invariant():
    mp.mp.dps = 30
    f = lambda b: 2 * mp.cos(b) - mp.sin(b) - mp.e**b  # noqa: E731
    b = zero_real_invariant(1.0)
    assert b == pytest.approx(float(mp.findroot(f, 0.4)), abs=1e-11)
    with pytest.raises(ValueError):
        zero_real_invariant(0.0)


def test_invariant_set_from_segment():
    lam0 = complex(2.0, 0.5)
    t = 0.3
    lam1 = eigenvalue_map(lam0, t)
    inv = InvariantSet.from_segment(lam0, lam1, t, tau_start=1.0)
    assert inv.a_o == inv.i3 == pytest.approx(0.6)
    assert inv.i2 == pytest.approx(lam1.real * t)
    assert inv.i1 == 0.5 * inv.i2
    assert inv.gamma == 0.25
    assert inv.a_degree == 2.0
    assert inv.b_o == pytest.approx(0.15)
    assert inv.a_o_bits == pytest.approx(0.6 * BITS_PER_NAT)
    assert not inv.unstable
    neg = InvariantSet.from_segment(-1.0, eigenvalue_map(-1.0, 0.2), 0.2)
    assert neg.unstable
    d = InvariantSet.from_segment(1.0, complex(math.nan, 0), 0.1).to_dict()
    assert d["a"] is None and d["a_o"] == pytest.approx(0.1)


def test_helpers():
    assert segment_interval(2.0, 1.2564) == pytest.approx(0.6282)
    with pytest.raises(ZeroDivisionError):
        segment_interval(0.0, 1.0)
    assert balance_check(1.0, 0.5, 0.25) == 0.0
    assert balance_check(1.0, 0.0, 0.25) == pytest.approx(0.5)
    np.testing.assert_allclose(connection_from_map(-1.0, 0.193), -0.193 * 0.701597 / 1.0,
                               rtol=1e-3)


def test_a_o_is_lipschitz_on_table_grid():
    delta = 1e-3
    steps = []
    for g in np.linspace(0.0, 5.0, 51):
        steps.append(abs(solve_a_o(g + delta) - solve_a_o(g)) / delta)
    # |d a_o / d gamma| stays bounded: no jump to another branch
    assert max(steps) < 1.0


def test_negative_case_interval():
    assert segment_interval(-1.0, -0.193) == pytest.approx(0.193)
    t1 = 0.19281578866106142
    inv = InvariantSet.from_segment(-1.0, eigenvalue_map(-1.0, t1), t1)
    assert inv.a_o == pytest.approx(-t1)
    assert inv.i2 == pytest.approx(invariant_connections(inv.i3)[1], abs=1e-12)


def test_single_row_table_residual():
    row = gamma_table(5.0, 1).rows[0]
    assert row.gamma == 0.0 and row.converged and row.residual < 1e-10
