import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phi4xi import lattice as lt


def test_axis_coords_even_and_odd():
    assert lt.axis_coords(4).tolist() == [-1, 0, 1, 2]
    assert lt.axis_coords(5).tolist() == [-2, -1, 0, 1, 2]


@given(st.integers(1, 40), st.integers(-200, 200))
def test_embed_residue_is_a_representative(M, r):
    e = lt.embed_residue(r, M)
    assert (e - r) % M == 0
    assert e in lt.axis_coords(M)


@given(st.integers(2, 7))
def test_centred_roundtrip(M):
    a = np.arange(M**4, dtype=float).reshape((M,) * 4)
    assert np.array_equal(lt.from_centred(lt.to_centred(a)), a)
    c = lt.to_centred(a)
    # first centred entry is the residue of the smallest coordinate
    r = lt.embed_residue(int(lt.axis_coords(M)[0]), M) % M
    assert c[0, 0, 0, 0] == a[r, r, r, r]


def test_torus_validation_and_embedding():
    t = lt.Torus(2, 3)
    assert t.M == 8 and t.volume == 8**4
    assert t.site(t.embed((7, 0, 5, 4))) == (7, 0, 5, 4)
    with pytest.raises(ValueError):
        lt.Torus(1, 2)
    with pytest.raises(ValueError):
        lt.Torus(2, -1)


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1))
def test_laplacian_sums_to_zero_and_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(5,) * 4)
    g = rng.normal(size=(5,) * 4)
    assert abs(lt.laplacian_apply(f).sum()) < 1e-10
    assert np.vdot(f, lt.laplacian_apply(g)) == pytest.approx(np.vdot(lt.laplacian_apply(f), g), rel=1e-12)


def test_laplacian_plane_wave_eigenvalue():
    M = 6
    k = 2 * np.pi * np.array([1, 0, 2, 3]) / M
    grids = np.meshgrid(*(np.arange(M),) * 4, indexing="ij")
    f = np.cos(sum(ki * gi for ki, gi in zip(k, grids)))
    lam = float(np.sum(2 - 2 * np.cos(k)))
    assert np.allclose(-lt.laplacian_apply(f), lam * f, atol=1e-12)


def test_multi_diff_commutes_and_kills_constants():
    rng = np.random.default_rng(1)
    f = rng.normal(size=(4,) * 4)
    a = lt.apply_multi_diff(lt.apply_multi_diff(f, (1, 0, 0, 0)), (0, 2, 0, 0))
    b = lt.apply_multi_diff(f, (1, 2, 0, 0))
    assert np.allclose(a, b)
    assert np.allclose(lt.apply_multi_diff(np.ones((4,) * 4), (0, 0, 1, 0)), 0)


def test_multi_indices_counts():
    assert len(lt.multi_indices(4)) == math.comb(8, 4)
    assert all(list(a) == sorted(a, reverse=True) for a in lt.multi_indices(4, sorted_only=True))


@pytest.mark.parametrize("m2,L,jm", [(1e-2, 2, 3), (1e-4, 2, 6), (0.25, 2, 1), (1 / 16, 4, 1), (0.9, 2, 0)])
def test_mass_scale_examples(m2, L, jm):
    assert lt.mass_scale(m2, L) == jm


@given(st.floats(1e-12, 0.999), st.integers(2, 9))
def test_mass_scale_defining_inequality(m2, L):
    j = lt.mass_scale(m2, L)
    assert L ** (2 * j) * m2 <= 1 < L ** (2 * (j + 1)) * m2


@given(st.lists(st.integers(-50, 50), min_size=4, max_size=4).filter(any), st.integers(2, 5))
def test_coalescence_scale(x, L):
    j = lt.coalescence_scale(x, L)
    r = math.sqrt(sum(c * c for c in x))
    assert j == max(0, int(math.floor(math.log(2 * r, L) + 1e-12))) or L**j <= 2 * r < L ** (j + 1)
    assert lt.coalescence_scale_r2(np.array([sum(c * c for c in x)]), L)[0] == j


def test_shells_partition_a_ball():
    L = 2
    pts = np.concatenate([lt.shell_members(j, L)[0] for j in (1, 2, 3, 4)])
    assert len({tuple(p) for p in pts.tolist()}) == len(pts)
    r2 = (pts**2).sum(1)
    assert (4 * r2 < L**8).all()
    brute = sum(1 for p in itertools.product(range(-8, 9), repeat=4) if 4 * sum(c * c for c in p) < L**8)
    assert len(pts) == brute
    for p in pts[::97]:
        assert lt.in_shell(p, lt.shell_index(p, L), L)


def test_shell_cap():
    with pytest.raises(ValueError):
        lt.shell_members(12, 2, cap=1000)


def test_r4_against_brute_force():
    counts = np.zeros(41, dtype=int)
    for p in itertools.product(range(-7, 8), repeat=4):
        n = sum(c * c for c in p)
        if n <= 40:
            counts[n] += 1
    assert counts.tolist() == [lt.r4(n) for n in range(41)]
    assert np.array_equal(lt.r4_table(40), counts)
