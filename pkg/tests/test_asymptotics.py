import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phi4xi import asymptotics as asy
from phi4xi import green, moments, rgflow
from phi4xi.lattice import r4


def _points(nmax):
    R = math.isqrt(nmax) + 1
    for x in itertools.product(range(-R, R + 1), repeat=4):
        n = sum(c * c for c in x)
        if n < nmax:
            yield x, n


# ---------------------------------------------------------------- parameters


@pytest.mark.parametrize("kw", [{"n": -1}, {"A": 0.0}, {"A": -1.0}, {"z0c": -1.0}])
def test_params_reject(kw):
    with pytest.raises(ValueError):
        asy.AsymptoticParams(**kw)


def test_gamma_values():
    assert asy.AsymptoticParams(n=0).gamma == pytest.approx(0.25)
    assert asy.AsymptoticParams(n=1).gamma == pytest.approx(1 / 3)
    assert asy.AsymptoticParams(n=1, log_power=False).gamma == 0.0
    assert asy.AsymptoticParams(A=2.0, z0c=1.0).A_tilde == 1.0


@pytest.mark.parametrize("eps", [0.0, -0.1, 0.5, 1.0])
def test_eps_range(eps):
    with pytest.raises(ValueError):
        asy.chi_asymptote(eps, asy.AsymptoticParams())


@settings(max_examples=60, deadline=None)
@given(eps=st.floats(1e-12, math.exp(-1)), n=st.integers(0, 10),
       A=st.floats(0.1, 10), z=st.floats(-0.5, 2.0))
def test_chi_times_mass(eps, n, A, z):
    p = asy.AsymptoticParams(n=n, A=A, z0c=z)
    assert asy.susceptibility_identity_residual(eps, p) < 1e-12


def test_xi_without_log():
    p = asy.AsymptoticParams(A=3.0, log_power=False)
    for q in (0.5, 1, 2):
        assert asy.xi_p_prediction(1e-3, q, p) == pytest.approx(moments.cp_constant(q) * math.sqrt(3e3), rel=1e-14)


@pytest.mark.parametrize("n", [0, 1, 2, 8])
def test_epsilon_exponents(n):
    p = asy.AsymptoticParams(n=n, A=1.7, z0c=0.2)
    out = asy.epsilon_exponents(2.0, np.geomspace(1e-10, 1e-2, 25), p)
    assert out["eps_exponent"] == pytest.approx(-0.5, abs=1e-9)
    assert out["log_exponent"] == pytest.approx(p.gamma / 2, abs=1e-8)
    # log ε^{-1} grows as ε shrinks, so the plain slope is a bit steeper
    assert -0.55 < out["plain_slope"] < -0.5


# ---------------------------------------------------------------- remainder bound


def test_remainder_bound():
    flow = rgflow.run_flow(0.1, 0.07, 50)
    with pytest.raises(ValueError):
        asy.remainder_bound((0, 0, 0, 0), 0.01, 1.0, flow)
    with pytest.raises(ValueError):
        asy.remainder_bound((1, 0, 0, 0), 0.01, -1.0, flow)
    near = asy.remainder_bound((3, 4, 0, 0), 0.01, 2.0, flow)
    assert near == pytest.approx(flow.gbar(asy.coalescence_scale((3, 4, 0, 0), 2)) / 25)
    far = asy.remainder_bound((30, 40, 0, 0), 0.01, 2.0, flow)
    g = flow.gbar(asy.coalescence_scale((30, 40, 0, 0), 2))
    assert far == pytest.approx(g / 2500 * 5.0**-4)
    assert asy.remainder_scale_form((30, 40, 0, 0), 0.01, 0.0, flow) > asy.remainder_scale_form((30, 40, 0, 0), 0.01, 2.0, flow)


# ---------------------------------------------------------------- radial sums


@pytest.mark.parametrize("q", [0.0, 2.0, -2.0, 1.5])
def test_radial_sum_brute(q):
    ref = math.fsum(n ** (q / 2) for _, n in _points(30) if 0 < n)
    assert asy.radial_power_sum(0, 30, q) == pytest.approx(ref, rel=1e-13)
    ref = math.fsum(n ** (q / 2) for _, n in _points(30) if 7 <= n)
    assert asy.radial_power_sum(7, 30, q) == pytest.approx(ref, rel=1e-13)


def test_radial_origin_flag():
    assert asy.radial_power_sum(0, 1, 0.0, exclude_origin=False) == 1.0
    assert asy.radial_power_sum(0, 1, 0.0) == 0.0
    assert asy.radial_power_sum(0, 2, 0.0) == r4(1) == 8


def test_radial_integral_matches_counts():
    # lattice count vs ball volume just below the exact/integral switch
    lo, hi = asy.EXACT_NORM2_MAX - 20000, asy.EXACT_NORM2_MAX
    exact = asy.radial_power_sum(lo, hi, 0.0)
    vol = 2 * math.pi**2 * (hi**2 - lo**2) / 4
    assert exact == pytest.approx(vol, rel=2e-2)
    # and across it the pieces add up
    a = asy.radial_power_sum(lo, hi + 10**6, -2.0)
    b = asy.radial_power_sum(lo, hi, -2.0) + asy.radial_power_sum(hi, hi + 10**6, -2.0)
    assert a == pytest.approx(b, rel=1e-14)


def test_shells_tile():
    L = 2
    total = math.fsum(asy.shell_power_sum(j, L, 0.0) for j in range(1, 7))
    hi = asy._shell_n_range(6, L)[1]
    assert total == pytest.approx(asy.radial_power_sum(0, hi, 0.0), rel=1e-14)
    for j in range(1, 8):
        assert asy.shell_power_sum_split(j, L, -1.0, 1e-3, 0.0) == pytest.approx(asy.shell_power_sum(j, L, -1.0), rel=1e-13)


def test_split_suppresses():
    for j in range(3, 9):
        assert asy.shell_power_sum_split(j, 2, 0.0, 0.01, 2.0) <= asy.shell_power_sum(j, 2, 0.0) * (1 + 1e-14)


def test_orbit_sizes_count_r4():
    for n in range(1, 40):
        reps = {tuple(sorted(abs(c) for c in x)) for x, m in _points(n + 1) if m == n}
        assert sum(asy._orbit_size(v) for v in reps) == r4(n)


def test_green_moment_brute():
    ref = math.fsum(n * green.infinite_green(tuple(sorted(abs(c) for c in x)), 0.0)
                    for x, n in _points(9) if n > 0)
    assert asy.green_moment_between(0, 9, 2.0) == pytest.approx(ref, rel=1e-9)


# ---------------------------------------------------------------- dominance


@pytest.mark.parametrize("p,s", [(2, 2), (2, 1.5), (1, 1.5), (1, 1)])
def test_dominance_needs_large_s(p, s):
    with pytest.raises(ValueError):
        asy.dominance_check(p, [1e-2, 1e-3], s)


def test_dominance_flow_start():
    flow = asy.dominance_flow(1e-4, g0=0.5)
    assert flow.gbar(0) == 0.5
    assert all(flow.gbar(j + 1) <= flow.gbar(j) for j in range(20))


def test_dominance_pieces_positive():
    d = asy.dominance_pieces(2.0, 0.1, 3.0, asy.dominance_flow(0.01, g0=3.0))
    assert d["free_sum"] == "exact"
    assert d["main"] == pytest.approx(8.0 / 0.01)
    for k in ("i", "ii", "iii"):
        assert d[k] > 0
