import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from phi4xi import green, moments
from phi4xi.lattice import Torus


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 6.0))
def test_cp_closed_matches_quadrature(p):
    assert moments.cp_power_quadrature(p) == pytest.approx(moments.cp_power_closed(p), rel=1e-9)


def test_cp_known_values():
    assert moments.cp_constant(2) == pytest.approx(2 * math.sqrt(2), rel=1e-15)
    assert moments.cp_constant(1) == pytest.approx(3 * math.pi / 4, rel=1e-15)
    with pytest.raises(ValueError):
        moments.cp_constant(0)
    with pytest.raises(ValueError):
        moments.cp_constant(1, method="nope")


def test_even_moment_polynomials():
    assert moments.even_moment_poly(1).coef.tolist() == [0.0, 8.0]
    assert moments.even_moment_poly(2).coef.tolist() == [0.0, 8.0, 96.0]
    assert moments.even_moment_poly(3).coef.tolist() == [0.0, 8.0, 384.0, 1536.0]


@pytest.mark.parametrize("t", [0.05, 1.0, 7.5])
def test_pmf_against_polynomials(t):
    R = int(8 * math.sqrt(2 * t) + 12)
    P = moments.square_norm_pmf(t, R * R)
    n = np.arange(R * R + 1)
    assert P.sum() == pytest.approx(1.0, abs=1e-12)
    # FFT round-off (~1e-17 absolute per entry) is weighted by n^k in the far tail
    for k, tol in ((1, 1e-10), (2, 1e-10), (3, 1e-8)):
        assert math.fsum(P * n**k) == pytest.approx(moments.even_moment_poly(k)(t), rel=tol)
    # P(|X|² = 0) is the return probability ive(0,2t)^4
    assert P[0] == pytest.approx(special.ive(0, 2 * t) ** 4, rel=1e-12)


@pytest.mark.parametrize("m2", [0.25, 0.04])
def test_even_moment_sums_exact(m2):
    r2, r4 = moments.free_moment_sums((2, 4), m2)
    exact2 = 8 / m2**2
    exact4 = 8 / m2**2 + 192 / m2**3
    assert abs(r2.value - exact2) <= r2.error
    assert abs(r4.value - exact4) <= r4.error
    assert r2.value == pytest.approx(exact2, rel=1e-9)
    assert r4.value == pytest.approx(exact4, rel=1e-9)
    assert r2.xi_p == pytest.approx(math.sqrt(8 / m2), rel=1e-9)


def test_p1_ratio_tends_to_one_like_m2():
    devs = [moments.free_moment_sum(1, m * m).ratio - 1 for m in (0.4, 0.2)]
    assert abs(devs[1]) < abs(devs[0]) / 3


def test_validation():
    with pytest.raises(ValueError):
        moments.free_moment_sum(1, 0.0)
    with pytest.raises(ValueError):
        moments.free_moment_sum(-1, 0.1)


def test_result_serialises():
    r = moments.free_moment_sum(2, 0.25)
    assert set(r.to_dict()) >= {"p", "m2", "value", "error", "ratio", "xi_p"}
    assert '"p": 2.0' in r.to_json()


def test_xi_from_torus_table():
    tab = green.torus_green(Torus(2, 2), 0.5)
    r = tab.radii()
    v, _ = tab.flat()
    direct = math.sqrt(math.fsum(r**2 * v) / math.fsum(v))
    assert moments.xi_p_from_table(tab, 2) == pytest.approx(direct, rel=1e-14)
    assert moments.xi_p_from_arrays(r, v, 2) == pytest.approx(direct, rel=1e-14)
    with pytest.raises(ValueError):
        moments.xi_p_from_arrays(r, -v, 2)


@given(st.floats(0.01, 10), st.floats(-3, 3))
def test_xi_invariant_under_rescaling(c, p_log):
    p = math.exp(p_log) / 2
    r = np.array([0.0, 1.0, 2.0, 3.5])
    v = np.array([1.0, 0.5, 0.2, 0.05])
    assert moments.xi_p_from_arrays(r, c * v, p) == pytest.approx(moments.xi_p_from_arrays(r, v, p), rel=1e-12)


@given(st.floats(0.3, 3.0))
def test_prop_slope_power_law(a):
    ms = np.array([0.4, 0.2, 0.1, 0.05])
    assert moments.prop_slope(ms, -3 * ms**a) == pytest.approx(a, rel=1e-10)
