import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from phi4xi import frd, green
from phi4xi.lattice import Torus, from_centred


def test_slice_times_and_degrees():
    assert [frd.slice_times(2, j) for j in (1, 2, 3)] == [(0, 1), (1, 2), (2, 4)]
    assert [frd.slice_degree(2, j) for j in (1, 2, 3, 4)] == [0, 1, 3, 7]
    assert frd.slice_degree(3, 2) == 3  # ⌊9/2⌋ − 1


def test_window_constant():
    assert frd.DEFAULT_WINDOW.c_phi == pytest.approx(32 / 3, rel=1e-14)
    assert np.polynomial.polynomial.polyval(1.0, frd.WENDLAND_13) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        frd.Window([1.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 40.0), st.floats(0.0, 40.0), st.integers(0, 30))
def test_time_integral_matches_quadrature(a, b, s):
    from scipy import integrate

    t0, t1 = sorted((a, b))
    w = frd.DEFAULT_WINDOW

    def phi(t):
        u = s / t if t > 0 else math.inf
        return np.polynomial.polynomial.polyval(u, w.coef) if u < 1 else 0.0

    ref = integrate.quad(phi, t0, t1, points=[s] if t0 < s < t1 else None, epsabs=1e-13)[0]
    assert w.time_integral(s, t0, t1) == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("L,j,m2", [(2, 3, 0.1), (2, 4, 1e-4), (3, 2, 0.5)])
def test_fft_and_clenshaw_kernels_agree(L, j, m2):
    a = frd.slice_kernel(L, j, m2, pad=1)
    b = frd.clenshaw_kernel(L, j, m2, pad=1)
    assert np.allclose(a, b, atol=1e-15, rtol=1e-11)


@pytest.mark.parametrize("L,j", [(2, 1), (2, 3), (2, 5), (3, 2), (4, 2)])
def test_exact_l1_range(L, j):
    K = frd.slice_kernel(L, j, 0.01, pad=3)
    D = frd.slice_degree(L, j)
    R = (K.shape[0] - 1) // 2
    l1 = frd.l1_radius_grid(R)
    assert np.abs(K[l1 > D]).max() <= 1e-15
    assert D < L**j / 2


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 16.0), st.sampled_from([1e-4, 1e-2, 0.3]), st.integers(1, 6))
def test_slice_symbols_nonnegative(lam, m2, j):
    assert frd.slice_symbol(np.array([lam]), 2, j, m2)[0] >= -1e-13


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 16.0), st.sampled_from([1e-4, 1e-2, 0.3]), st.integers(2, 7))
def test_partial_plus_remainder_is_inverse(lam, m2, J):
    x = np.array([lam])
    tot = frd.partial_symbol(x, 2, J - 1, m2) + frd.remainder_symbol(x, 2, J, m2)
    assert tot[0] == pytest.approx(1 / (lam + m2), rel=1e-10)


def test_symbol_residual_decreases():
    r = [frd.symbol_residual(2, J, 0.01) for J in (4, 8, 14)]
    assert r[0] > r[1] > r[2]
    assert r[2] < 1e-8


def test_spectral_rule_moments():
    x, w = frd.spectral_rule(32)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.dot(w, x) == pytest.approx(8.0, rel=1e-13)
    assert np.dot(w, x * x) == pytest.approx(72.0, rel=1e-13)
    for tau in (0.1, 1.0, 3.0):
        assert np.dot(w, np.exp(-tau * x)) == pytest.approx(special.ive(0, 2 * tau) ** 4, rel=1e-10)
    with pytest.raises(ValueError):
        frd.spectral_rule(0)
    with pytest.raises(ValueError):
        frd.rule_size_for_degree(10**4)


@pytest.mark.parametrize("L,j,m2", [(2, 3, 0.1), (2, 5, 1e-4)])
def test_origin_value_and_positivity(L, j, m2):
    K = frd.slice_kernel(L, j, m2)
    R = (K.shape[0] - 1) // 2
    assert frd.slice_origin_value(L, j, m2) == pytest.approx(K[(R,) * 4], rel=1e-11)
    assert K[(R,) * 4] > 0
    # positive semi-definite: a random quadratic form is nonnegative
    f = np.random.default_rng(0).normal(size=K.shape)
    from scipy.signal import fftconvolve

    assert np.vdot(f, fftconvolve(f, K, mode="same")) > 0


def test_origin_values_sum_to_green():
    m2 = 0.05
    J = 9
    s = sum(frd.slice_origin_value(2, j, m2) for j in range(1, J + 1))
    x, w = frd.spectral_rule(256)
    rem = float(np.dot(w, frd.remainder_symbol(x, 2, J + 1, m2)))
    assert rem > 0
    assert s + rem == pytest.approx(green.infinite_green((0, 0, 0, 0), m2), rel=1e-12)


def test_torus_telescoping_small():
    m2, torus, J = 0.2, Torus(2, 3), 3
    dec = frd.decompose(m2, 2, J, torus)
    M = torus.M
    tot = np.zeros((M,) * 4)
    for K in dec.kernels[:-1]:
        R = (K.shape[0] - 1) // 2
        idx = np.arange(-R, R + 1) % M
        tot[np.ix_(idx, idx, idx, idx)] += K
    tot += from_centred(dec.kernels[-1][1:, 1:, 1:, 1:])
    G = from_centred(green.torus_green(torus, m2).values)
    assert np.abs(tot - G).max() < 1e-13
    for x in [(0, 0, 0, 0), (1, 2, 0, 0), (4, 4, 4, 4), (-3, 1, 0, 2)]:
        assert dec.total(x) == pytest.approx(green.torus_green(torus, m2).value(x), rel=1e-12)
    assert dec.is_finite_range(1) and not dec.is_finite_range(J)


def test_ball_decomposition_total():
    dec = frd.decompose(0.3, 2, 3, ("ball", 3.0))
    for x in [(0, 0, 0, 0), (1, 1, 0, 0), (2, 1, 1, 1)]:
        assert dec.total(x) == pytest.approx(green.infinite_green(x, 0.3), rel=1e-12)


def test_decompose_errors():
    with pytest.raises(frd.DecompositionError):
        frd.decompose(0.0, 2, 3)
    with pytest.raises(frd.DecompositionError):
        frd.decompose(0.1, 2, 1)
    with pytest.raises(frd.DecompositionError):
        frd.decompose(0.1, 2, 4, Torus(2, 3))
    with pytest.raises(frd.DecompositionError):
        frd.decompose(0.1, 2, 3, ("cube", 2))


def test_write_outputs(tmp_path):
    dec = frd.decompose(0.25, 2, 3)
    paths = dec.write(tmp_path)
    assert len(paths) == 4
    head = open(paths[1]).readline().strip()
    assert head == "x1,x2,x3,x4,value"


def test_derivative_sups_on_delta():
    K = np.zeros((9,) * 4)
    K[(4,) * 4] = 1.0
    s = frd.derivative_sups(K, 4)
    assert s[(0, 0, 0, 0)] == 1
    assert s[(1, 0, 0, 0)] == 1
    assert s[(2, 0, 0, 0)] == 2
    assert s[(4, 0, 0, 0)] == 6
    assert s[(2, 2, 0, 0)] == 4
    assert s[(1, 1, 1, 1)] == 1
    assert len(s) == len(frd.sorted_gammas(4)) == 12


def test_scaling_constants_and_report():
    rep = frd.check_scaling_estimate(None, (0, 2), 2, scales=[2, 3], L=2, m2=0.01)
    for (g, k), v in rep.constants.items():
        if k == 2:
            assert all(a >= b for a, b in zip(v, rep.constants[(g, 0)]))
    d = rep.to_dict()
    assert len(d["rows"]) == 2 * len(frd.sorted_gammas(2))
    with pytest.raises(ValueError):
        frd.check_scaling_estimate(None, 0, 2)


def test_cbd_scaling_in_ell0():
    rep = frd.check_cbd(2, 0.25, [1, 2, 3], None, 0)
    assert rep.passed
    tight = [r["norm"] for r in rep.rows]
    rep2 = frd.check_cbd(2, 0.25, [1, 2, 3], 2 * rep.ell0, 0)
    assert [r["norm"] for r in rep2.rows] == pytest.approx([t / 4 for t in tight], rel=1e-14)
    assert not frd.check_cbd(2, 0.25, [1, 2, 3], rep.min_ell0 / 2, 0).passed
    with pytest.raises(ValueError):
        frd.covariance_phi_norm(np.zeros((5,) * 4), 1.0, p_phi=3)
