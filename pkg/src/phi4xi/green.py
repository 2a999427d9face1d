"""Lattice and continuum Green functions of −Δ + m².

Three independent routes are provided: spectral inversion on a torus, the
Bessel time-integral on Z^4, and the continuum kernel (2π)^{-2} K₁(r)/r.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .lattice import DIM, Torus, axis_coords, to_centred

MAX_TORUS_SITES = 2**26


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, msg, achieved):
        super().__init__(f"{msg} (achieved error {achieved:.3e})")
        self.achieved = achieved


@dataclass
class TwoPointTable:
    """x ↦ (value, error) on a cube of Z^4 points stored in centred row-major order.

    ``values[i1, i2, i3, i4]`` belongs to the point ``lo + (i1, i2, i3, i4)``.
    ``mask`` selects the points that belong to the domain (all of them for a torus).
    """

    values: np.ndarray
    errors: np.ndarray
    lo: int
    m2: float
    provenance: str
    domain: dict
    mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def side(self) -> int:
        return self.values.shape[0]

    def value(self, x) -> float:
        idx = tuple(int(c) - self.lo for c in x)
        if self.domain.get("kind") == "torus":
            idx = tuple(i % self.side for i in idx)
        if any(i < 0 or i >= self.side for i in idx):
            raise KeyError(f"point {tuple(x)} outside the table")
        if self.mask is not None and not self.mask[idx]:
            raise KeyError(f"point {tuple(x)} outside the domain")
        return float(self.values[idx])

    def coords(self) -> np.ndarray:
        ax = np.arange(self.lo, self.lo + self.side)
        grids = np.meshgrid(*(ax,) * DIM, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        if self.mask is not None:
            pts = pts[self.mask.ravel()]
        return pts

    def flat(self) -> tuple:
        if self.mask is None:
            return self.values.ravel(), self.errors.ravel()
        return self.values[self.mask], self.errors[self.mask]

    def total(self) -> float:
        v, _ = self.flat()
        return math.fsum(v)

    def radii(self) -> np.ndarray:
        return np.sqrt((self.coords().astype(float) ** 2).sum(axis=1))

    def write_csv(self, path):
        v, e = self.flat()
        pts = self.coords()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x1", "x2", "x3", "x4", "value", "err"])
            for p, a, b in zip(pts, v, e):
                w.writerow([*map(int, p), repr(float(a)), repr(float(b))])

    def to_dict(self) -> dict:
        v, e = self.flat()
        return {
            "domain": self.domain,
            "m2": self.m2,
            "provenance": self.provenance,
            "meta": self.meta,
            "points": [[*map(int, p), float(a), float(b)] for p, a, b in zip(self.coords(), v, e)],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def laplacian_symbol(M: int, d: int = DIM, half: bool = False) -> np.ndarray:
    """λ(k) = Σ_i (2 − 2cos k_i) on the dual torus, broadcastable (sparse) grid.

    With ``half=True`` the last axis is the rfft half axis.
    """
    k = 2 * np.pi * np.fft.fftfreq(M)
    one = 2 - 2 * np.cos(k)
    axes = [one] * d
    if half:
        axes[-1] = one[: M // 2 + 1]
    return sum(np.meshgrid(*axes, indexing="ij", sparse=True))


def spectral_kernel(symbol_fn, M: int, d: int = DIM) -> np.ndarray:
    """Real kernel (FFT order) whose Fourier symbol is ``symbol_fn(λ(k))``."""
    lam = laplacian_symbol(M, d, half=True)
    sym = symbol_fn(np.broadcast_to(lam, (M,) * (d - 1) + (M // 2 + 1,)))
    return np.fft.irfftn(sym, s=(M,) * d, axes=tuple(range(d)))


def torus_green(torus: Torus, m2: float) -> TwoPointTable:
    """G_x = M^{-d} Σ_k e^{ik·x}/(λ(k)+m²) by FFT; returned in centred order."""
    if not m2 > 0:
        raise ValueError(f"torus Green function needs m^2 > 0, got {m2}")
    if torus.volume > MAX_TORUS_SITES:
        raise MemoryError(f"torus with {torus.volume} sites exceeds the budget of {MAX_TORUS_SITES}")
    M, d = torus.M, torus.d
    if M == 1:
        G = np.full((1,) * d, 1.0 / m2)
    else:
        G = spectral_kernel(lambda lam: 1.0 / (lam + m2), M, d)
    err_scale = np.finfo(float).eps * (math.log2(max(torus.volume, 2)) + 4) * (1.0 / m2)
    G = to_centred(G, d)
    return TwoPointTable(
        values=G,
        errors=np.full(G.shape, err_scale / max(torus.volume, 1) * 16 + np.finfo(float).eps * np.abs(G)),
        lo=int(axis_coords(M)[0]),
        m2=m2,
        provenance="exact-spectral",
        domain={"kind": "torus", "L": torus.L, "N": torus.N, "M": M},
    )


def _tail_bound(T: float, m2: float) -> float:
    # For t ≥ T ≥ 1: Π ive(x_i,2t) ≤ ive(0,2t)^4 and √t·ive(0,2t) is decreasing,
    # so the tail is at most ive(0,2T)^4 T² ∫_T^∞ e^{-m²t} t^{-2} dt ≤ ive(0,2T)^4 T e^{-m²T}.
    return special.ive(0, 2 * T) ** 4 * T * math.exp(-m2 * T)


_ASYM_ORDER = 10


def _hankel_coeffs(k: int, order: int) -> np.ndarray:
    """a_n with e^{-z} I_k(z) ~ (2πz)^{-1/2} Σ_n a_n z^{-n} as z → ∞."""
    mu = 4 * k * k
    out = np.ones(order + 1)
    for n in range(1, order + 1):
        out[n] = -out[n - 1] * (mu - (2 * n - 1) ** 2) / (n * 8)
    return out


def _asymptotic_tail(ax: tuple, m2: float, T: float) -> tuple:
    """∫_T^∞ e^{-m²t} Π ive(k,2t) dt from the large-argument expansion, with an error estimate."""
    c = np.ones(1)
    for k in ax:
        c = np.convolve(c, _hankel_coeffs(k, _ASYM_ORDER))[: _ASYM_ORDER + 1]
    # Π (2π·2t)^{-1/2} = (4πt)^{-2}; z^{-n} = (2t)^{-n}; ∫_T^∞ e^{-m²t} t^{-2-n} dt = T^{-1-n} E_{n+2}(m²T)
    terms = [
        c[n] * 0.5**n * T ** (-1 - n) * float(special.expn(n + 2, m2 * T)) for n in range(_ASYM_ORDER + 1)
    ]
    pref = 1 / (16 * math.pi**2)
    val = pref * math.fsum(terms[:-1])
    return val, pref * 2 * abs(terms[-1])


@lru_cache(maxsize=100_000)
def _infinite_green_sorted(ax: tuple, m2: float, rtol: float) -> tuple:
    def f(t):
        v = math.exp(-m2 * t)
        for k in ax:
            v *= special.ive(k, 2 * t)
        return v

    r2 = sum(k * k for k in ax)
    peak = max(r2 / 8, 1.0)
    # beyond t_asym the Hankel expansion converges geometrically (ratio ≲ k²/(2t))
    t_asym = max(40.0 * (1 + max(ax) ** 2), 10 * peak)
    edges = [0.0, 1.0]
    while edges[-1] < peak:
        edges.append(edges[-1] * 4)
    while edges[-1] < t_asym:
        edges.append(min(edges[-1] * 4, t_asym))
    total, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(f, a, b, epsabs=0.0, epsrel=max(rtol * 0.1, 1.2e-14), limit=200)
        total += val
        err += e
        if m2 > 0 and b >= 10 * peak and _tail_bound(b, m2) <= rtol * abs(total) * 0.01:
            err += _tail_bound(b, m2)
            break
    else:
        tail, terr = _asymptotic_tail(ax, m2, edges[-1])
        total += tail
        err += terr
    if err > rtol * abs(total) and err > 1e-300:
        raise QuadratureError(f"Green function at {ax}, m2={m2}", err / abs(total))
    return total, err


def infinite_green(x, m2: float, rtol: float = 1e-12, with_error: bool = False):
    """G_x(0,m²) on Z^4 from ∫₀^∞ e^{-m²t} Π_i e^{-2t} I_{x_i}(2t) dt.

    The integrand is the transition probability of the rate-8 walk, so the
    integral is the expected time spent at x before an independent Exp(m²) clock.
    """
    if m2 < 0:
        raise ValueError(f"m^2 must be ≥ 0, got {m2}")
    ax = tuple(sorted(abs(int(c)) for c in x))
    if len(ax) != DIM:
        raise ValueError(f"expected a {DIM}-d point, got {x}")
    val, err = _infinite_green_sorted(ax, float(m2), float(rtol))
    return (val, err) if with_error else val


def ball_green(radius: float, m2: float, rtol: float = 1e-12) -> TwoPointTable:
    """Quadrature table on {|x| ≤ radius} ⊂ Z^4 (one integral per symmetry class)."""
    R = int(math.floor(radius))
    ax = np.arange(-R, R + 1)
    grids = np.meshgrid(*(ax,) * DIM, indexing="ij")
    r2 = sum(g * g for g in grids)
    mask = r2 <= radius * radius
    vals = np.zeros(r2.shape)
    errs = np.zeros(r2.shape)
    key = np.sort(np.abs(np.stack(grids, axis=-1)), axis=-1)
    cache = {}
    for idx in zip(*np.nonzero(mask)):
        k = tuple(int(c) for c in key[idx])
        if k not in cache:
            cache[k] = infinite_green(k, m2, rtol, with_error=True)
        vals[idx], errs[idx] = cache[k]
    return TwoPointTable(vals, errs, -R, m2, "quadrature", {"kind": "ball", "radius": radius}, mask=mask)


def green_residual(m2: float, x=(0, 0, 0, 0), rtol: float = 1e-12) -> float:
    """((−Δ+m²)G)_x − δ_{0x} evaluated with quadrature values."""
    x = tuple(int(c) for c in x)
    center = infinite_green(x, m2, rtol)
    nb = 0.0
    for i in range(DIM):
        for s in (1, -1):
            y = list(x)
            y[i] += s
            nb += infinite_green(y, m2, rtol)
    delta = 1.0 if all(c == 0 for c in x) else 0.0
    return (2 * DIM + m2) * center - nb - delta


def continuum_green(r):
    """(−Δ_{R^4}+1)^{-1}(0,x) = (2π)^{-2} K₁(r)/r, r = |x| > 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("continuum Green function needs r > 0")
    out = special.kve(1, r) * np.exp(-r) / r / (4 * math.pi**2)
    return out if out.ndim else float(out)


def massless_green_00(rtol: float = 1e-13) -> float:
    """(−Δ_{Z^4})^{-1}_{00}."""
    return infinite_green((0, 0, 0, 0), 0.0, rtol)


def a_coefficient(n: int) -> float:
    """a(n) = (n+2)·(−Δ)^{-1}_{00}, the first-order coefficient of the critical point."""
    if n < 0:
        raise ValueError("n must be ≥ 0")
    return (n + 2) * massless_green_00()


def nu_c_first_order(g: float, n: int) -> float:
    """First-order expansion ν_c ≈ −a(n)·g."""
    return -a_coefficient(n) * g
