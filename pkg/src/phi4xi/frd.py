"""Finite-range decomposition (−Δ+m²)^{-1} = Σ_j C_j on Z^4 and on tori.

Every slice except the last is a polynomial Q_j(−Δ) of degree D_j < ⌊L^j/2⌋, so
its kernel vanishes identically outside the ℓ¹ ball of radius D_j and hence for
|x| ≥ L^j/2.  The polynomials come from a discrete wave-equation identity: with
c = (16+m²)/2 and cos θ = X = 1 − (λ+m²)/c,

    1/(λ+m²) = 2/(c·C_φ) ∫_0^∞ Σ_{s∈Z} φ(|s|/t) cos(sθ) dt,

where φ is a compactly supported positive-definite window on [0, 1] and
C_φ = −2∫_0^1 φ'(v)/v dv.  Restricting the t-integral to [t_{j−1}, t_j] gives a
Chebyshev series in X of degree < t_j, and the slices sum to the full inverse.
The last slice is the spectral remainder.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as Ch
from numpy.polynomial import polynomial as P
from scipy.linalg import eigh_tridiagonal

from .green import infinite_green, laplacian_symbol
from .lattice import DIM, Torus, embed_residue, from_centred, laplacian_apply, to_centred

# Wendland ψ_{1,3}(r) = (1−r)^7 (21r³ + 19r² + 7r + 1), monomial coefficients in r
WENDLAND_13 = P.polymul(P.polypow([1.0, -1.0], 7), [1.0, 7.0, 19.0, 21.0])

MAX_RULE_NODES = 256


class DecompositionError(ValueError):
    pass


class Window:
    """Polynomial window φ on [0, 1] with φ(0) = 1 and φ'(0) = 0."""

    def __init__(self, coef=WENDLAND_13):
        coef = np.asarray(coef, dtype=float)
        coef = coef / coef[0]
        d = P.polyder(coef)
        if abs(d[0]) > 1e-14:
            raise ValueError("window must satisfy φ'(0) = 0")
        self.coef = coef
        integral = P.polyint(d[1:])
        self.c_phi = float(-2 * (P.polyval(1.0, integral) - P.polyval(0.0, integral)))

    def time_integral(self, s: int, t0: float, t1: float) -> float:
        """∫_{t0}^{t1} φ(s/t) dt."""
        if s == 0:
            return t1 - t0
        lo = s / t1
        if lo >= 1:
            return 0.0
        hi = 1.0 if t0 == 0 else min(1.0, s / t0)
        # substitute u = s/t: ∫ φ(u) s/u² du; antiderivative −c0/u + c1 log u + Σ_k c_k u^{k−1}/(k−1)
        c = self.coef
        acc = [c[0] * (t1 - s / hi)]
        if len(c) > 1 and c[1] != 0:
            acc.append(s * c[1] * math.log(hi / lo))
        for k in range(2, len(c)):
            acc.append(s * c[k] * (hi ** (k - 1) - lo ** (k - 1)) / (k - 1))
        return math.fsum(acc)


DEFAULT_WINDOW = Window()


def slice_times(L: int, j: int) -> tuple:
    """(t_{j−1}, t_j) with t_j = ⌊L^j/2⌋ and t_0 = 0."""
    if j < 1:
        raise DecompositionError(f"scale index must be ≥ 1, got {j}")
    t1 = L**j // 2
    t0 = 0 if j == 1 else L ** (j - 1) // 2
    if t1 <= t0:
        raise DecompositionError(f"scale {j}: empty time window for L={L}")
    return t0, t1


def slice_degree(L: int, j: int) -> int:
    return slice_times(L, j)[1] - 1


def chebyshev_scale(m2: float) -> float:
    return (16.0 + m2) / 2.0


@lru_cache(maxsize=4096)
def _slice_coefficients(L: int, j: int, m2: float, wkey: tuple) -> np.ndarray:
    win = DEFAULT_WINDOW if wkey == tuple(DEFAULT_WINDOW.coef) else Window(wkey)
    t0, t1 = slice_times(L, j)
    c = chebyshev_scale(m2)
    pref = 2.0 / (c * win.c_phi)
    a = np.array([(1.0 if s == 0 else 2.0) * win.time_integral(s, t0, t1) for s in range(t1)])
    a *= pref
    a.setflags(write=False)
    return a


def slice_coefficients(L: int, j: int, m2: float, window: Window = DEFAULT_WINDOW) -> np.ndarray:
    """Chebyshev coefficients of Q_j in X = 1 − (λ+m²)/c."""
    if not m2 >= 0:
        raise DecompositionError(f"m^2 must be ≥ 0, got {m2}")
    return _slice_coefficients(int(L), int(j), float(m2), tuple(window.coef))


def slice_symbol(lam, L: int, j: int, m2: float, window: Window = DEFAULT_WINDOW):
    """Q_j(λ)."""
    a = slice_coefficients(L, j, m2, window)
    return Ch.chebval(1.0 - (np.asarray(lam) + m2) / chebyshev_scale(m2), a)


def partial_symbol(lam, L: int, J: int, m2: float, window: Window = DEFAULT_WINDOW):
    """W_J(λ) = Σ_{j≤J} Q_j(λ)."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros(lam.shape)
    for j in range(1, J + 1):
        out = out + slice_symbol(lam, L, j, m2, window)
    return out


def remainder_symbol(lam, L: int, J: int, m2: float, window: Window = DEFAULT_WINDOW):
    """1/(λ+m²) − Σ_{j<J} Q_j(λ), the symbol of the last slice when there are J slices."""
    lam = np.asarray(lam, dtype=float)
    return 1.0 / (lam + m2) - partial_symbol(lam, L, J - 1, m2, window)


def symbol_residual(L: int, J: int, m2: float, npts: int = 4001) -> float:
    """sup_{λ∈[0,16]} |(λ+m²) Σ_{j≤J} Q_j(λ) − 1|; tends to 0 as J grows when m² > 0."""
    lam = np.linspace(0.0, 16.0, npts)
    return float(np.max(np.abs((lam + m2) * partial_symbol(lam, L, J, m2) - 1.0)))


def _fft_kernel(a: np.ndarray, c: float, m2: float, M: int) -> np.ndarray:
    lam = laplacian_symbol(M, DIM, half=True)
    sym = Ch.chebval(1.0 - (lam + m2) / c, a)
    sym = np.broadcast_to(sym, (M,) * (DIM - 1) + (M // 2 + 1,))
    return np.fft.irfftn(sym, s=(M,) * DIM, axes=tuple(range(DIM)))


def slice_kernel(L: int, j: int, m2: float, pad: int = 0, window: Window = DEFAULT_WINDOW) -> np.ndarray:
    """Kernel of Q_j(−Δ) on Z^4 restricted to the centred box |x_i| ≤ D_j + pad.

    Computed by FFT on a torus of side 2(D_j+pad)+1 or larger; no wrap-around occurs
    because the kernel vanishes outside the ℓ¹ ball of radius D_j.
    """
    a = slice_coefficients(L, j, m2, window)
    D = len(a) - 1
    R = D + pad
    M = 2 * R + 2
    K = _fft_kernel(a, chebyshev_scale(m2), m2, M)
    K = to_centred(K)  # index 0 ↔ coordinate −R
    K = K[: 2 * R + 1, : 2 * R + 1, : 2 * R + 1, : 2 * R + 1].copy()
    # outside the ℓ¹ ball of radius D the kernel is zero exactly; FFT leaves ~1e-17
    return K


def l1_radius_grid(R: int) -> np.ndarray:
    ax = np.abs(np.arange(-R, R + 1))
    return sum(np.meshgrid(*(ax,) * DIM, indexing="ij", sparse=True))


def clenshaw_kernel(L: int, j: int, m2: float, pad: int = 0, window: Window = DEFAULT_WINDOW) -> np.ndarray:
    """Same kernel as :func:`slice_kernel`, by Clenshaw's recurrence with the Laplacian stencil."""
    a = slice_coefficients(L, j, m2, window)
    D = len(a) - 1
    R = D + pad
    side = 2 * R + 3
    c = chebyshev_scale(m2)
    delta = np.zeros((side,) * DIM)
    delta[(R + 1,) * DIM] = 1.0

    def X(f):
        return f + (laplacian_apply(f) - m2 * f) / c

    b1 = np.zeros_like(delta)
    b2 = np.zeros_like(delta)
    for s in range(D, 0, -1):
        b1, b2 = a[s] * delta + 2 * X(b1) - b2, b1
    out = a[0] * delta + X(b1) - b2
    return out[1:-1, 1:-1, 1:-1, 1:-1]


@dataclass
class CovarianceDecomposition:
    """Slices C_1..C_J; kernels[j−1] is a centred array, the last one is the remainder."""

    L: int
    m2: float
    J: int
    kernels: list
    degrees: list
    domain: dict
    coefficients: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def kernel(self, j: int) -> np.ndarray:
        return self.kernels[j - 1]

    def half_width(self, j: int) -> int:
        return (self.kernels[j - 1].shape[0] - 1) // 2

    def value(self, j: int, x) -> float:
        K = self.kernels[j - 1]
        R = (K.shape[0] - 1) // 2
        if self.domain["kind"] == "torus" and j == self.J:
            M = self.domain["M"]
            idx = tuple(embed_residue(int(c) % M, M) + R for c in x)
        else:
            idx = tuple(int(c) + R for c in x)
            if any(i < 0 or i >= K.shape[0] for i in idx):
                return 0.0
        return float(K[idx])

    def is_finite_range(self, j: int) -> bool:
        return j < self.J or self.meta.get("last") == "finite"

    def range_bound(self, j: int) -> float:
        return self.L**j / 2

    def total(self, x) -> float:
        return math.fsum(self.value(j, x) for j in range(1, self.J + 1))

    def write(self, outdir) -> list:
        """Per-scale CSV kernels plus a JSON manifest; returns the written paths."""
        os.makedirs(outdir, exist_ok=True)
        paths = []
        for j, K in enumerate(self.kernels, start=1):
            R = (K.shape[0] - 1) // 2
            path = os.path.join(outdir, f"C_{j:02d}.csv")
            ax = np.arange(-R, R + 1)
            with open(path, "w", newline="") as fh:
                fh.write("x1,x2,x3,x4,value\n")
                for idx in np.ndindex(K.shape):
                    if self.is_finite_range(j) and sum(abs(int(ax[i])) for i in idx) > self.degrees[j - 1]:
                        continue
                    fh.write(",".join(str(int(ax[i])) for i in idx) + f",{float(K[idx])!r}\n")
            paths.append(path)
        manifest = {
            "L": self.L,
            "m2": self.m2,
            "J": self.J,
            "degrees": self.degrees,
            "domain": self.domain,
            "files": [os.path.basename(p) for p in paths],
            "meta": self.meta,
        }
        mpath = os.path.join(outdir, "manifest.json")
        with open(mpath, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        paths.append(mpath)
        return paths


def decompose(m2: float, L: int, j_max: int, domain=None, window: Window = DEFAULT_WINDOW) -> CovarianceDecomposition:
    """Build C_1, …, C_{j_max}; slices j < j_max have exact finite range.

    ``domain`` is a :class:`Torus` with M ≥ L^{j_max}, or ``("ball", radius)`` for a
    region of Z^4 (the last slice is then G − Σ_{j<j_max} C_j from quadrature), or
    None for the finite slices only (the last entry is then also a finite slice).
    """
    if not m2 > 0:
        raise DecompositionError(f"decomposition needs m^2 > 0, got {m2}")
    if j_max < 2:
        raise DecompositionError(f"j_max must be ≥ 2, got {j_max}")
    finite = [slice_kernel(L, j, m2, window=window) for j in range(1, j_max)]
    degrees = [slice_degree(L, j) for j in range(1, j_max + 1)]
    coefs = [np.asarray(slice_coefficients(L, j, m2, window)) for j in range(1, j_max)]
    if domain is None:
        finite.append(slice_kernel(L, j_max, m2, window=window))
        coefs.append(np.asarray(slice_coefficients(L, j_max, m2, window)))
        return CovarianceDecomposition(L, m2, j_max, finite, degrees, {"kind": "Z4-finite"}, coefs,
                                       {"last": "finite"})
    if isinstance(domain, Torus):
        M = domain.M
        if M < L**j_max:
            raise DecompositionError(f"torus side {M} < L^j_max = {L**j_max}")
        lam = laplacian_symbol(M, DIM, half=True)
        rem = np.broadcast_to(remainder_symbol(lam, L, j_max, m2, window), (M,) * (DIM - 1) + (M // 2 + 1,))
        K = to_centred(np.fft.irfftn(rem, s=(M,) * DIM, axes=tuple(range(DIM))))
        if M % 2 == 0:
            # centred order runs −M/2+1..M/2; store on a symmetric box by wrapping the far face
            K = np.pad(K, [(1, 0)] * DIM, mode="wrap")
        finite.append(K)
        dom = {"kind": "torus", "L": domain.L, "N": domain.N, "M": M}
        return CovarianceDecomposition(L, m2, j_max, finite, degrees, dom, coefs, {"last": "spectral-remainder"})
    kind, radius = domain
    if kind != "ball":
        raise DecompositionError(f"unknown domain {domain!r}")
    R = int(math.floor(radius))
    ax = np.arange(-R, R + 1)
    grids = np.meshgrid(*(ax,) * DIM, indexing="ij")
    key = np.sort(np.abs(np.stack(grids, axis=-1)), axis=-1)
    mask = sum(g * g for g in grids) <= radius * radius
    G = np.zeros(mask.shape)
    for idx in zip(*np.nonzero(mask)):
        G[idx] = infinite_green(tuple(int(c) for c in key[idx]), m2)
    rem = G.copy()
    for K in finite:
        r = (K.shape[0] - 1) // 2
        lo, hi = max(0, R - r), min(2 * R + 1, R + r + 1)
        klo = lo - (R - r)
        sl = tuple(slice(lo, hi) for _ in range(DIM))
        ksl = tuple(slice(klo, klo + hi - lo) for _ in range(DIM))
        rem[sl] -= K[ksl]
    rem[~mask] = 0.0
    finite.append(rem)
    dom = {"kind": "ball", "radius": radius}
    return CovarianceDecomposition(L, m2, j_max, finite, degrees, dom, coefs, {"last": "green-minus-slices"})


# ---------------------------------------------------------------- λ-measure rule


def _lanczos_rule(x: np.ndarray, w: np.ndarray, n: int) -> tuple:
    q = np.sqrt(w / w.sum())
    Q = np.zeros((n, len(x)))
    a = np.zeros(n)
    b = np.zeros(n - 1)
    Q[0] = q
    prev = np.zeros_like(q)
    beta = 0.0
    for k in range(n):
        v = x * Q[k] - beta * prev
        a[k] = Q[k] @ v
        v -= a[k] * Q[k]
        v -= Q[: k + 1].T @ (Q[: k + 1] @ v)
        if k < n - 1:
            beta = float(np.linalg.norm(v))
            b[k] = beta
            prev = Q[k]
            Q[k + 1] = v / beta
    nodes, vec = eigh_tridiagonal(a, b)
    return nodes, w.sum() * vec[0] ** 2


@lru_cache(maxsize=8)
def spectral_rule(n: int) -> tuple:
    """n-node Gauss rule for the law of λ(k), k uniform on [−π, π]^4.

    Σ_x f(−Δ)_{0x} = E f(λ) for polynomials f, and the rule integrates every
    polynomial of degree < 2n exactly.
    """
    if not 1 <= n <= MAX_RULE_NODES:
        raise ValueError(f"rule size must be in [1, {MAX_RULE_NODES}], got {n}")
    i = np.arange(1, n + 1)
    x1 = 2 - 2 * np.cos((2 * i - 1) * np.pi / (2 * n))
    w1 = np.full(n, 1.0 / n)
    x2, w2 = _lanczos_rule((x1[:, None] + x1[None, :]).ravel(), (w1[:, None] * w1[None, :]).ravel(), n)
    x4, w4 = _lanczos_rule((x2[:, None] + x2[None, :]).ravel(), (w2[:, None] * w2[None, :]).ravel(), n)
    x4.setflags(write=False)
    w4.setflags(write=False)
    return x4, w4


def rule_size_for_degree(deg: int) -> int:
    """Smallest power of two n with 2n > deg."""
    n = 1
    while 2 * n <= deg:
        n *= 2
    if n > MAX_RULE_NODES:
        raise ValueError(f"polynomial degree {deg} needs more than {MAX_RULE_NODES} rule nodes")
    return n


def slice_origin_value(L: int, j: int, m2: float) -> float:
    """C_{j;00} = E[Q_j(λ)] (exact through the Gauss rule)."""
    x, w = spectral_rule(rule_size_for_degree(slice_degree(L, j)))
    return float(np.dot(w, slice_symbol(x, L, j, m2)))


# ------------------------------------------------------------ derivative sups


def sorted_gammas(order: int) -> list:
    out = []

    def rec(prefix, left, cap):
        if len(prefix) == DIM:
            out.append(tuple(prefix))
            return
        for k in range(min(left, cap), -1, -1):
            rec(prefix + [k], left - k, k)

    rec([], order, order)
    return sorted(out, key=lambda g: (sum(g), g))


def derivative_sups(K: np.ndarray, order: int) -> dict:
    """γ ↦ sup_x |∇^γ K_x| for non-increasing γ with |γ| ≤ order.

    K must carry ``order`` zero layers around its support so that forward
    differences are exact; permuted γ give the same sup by lattice symmetry.
    Differences are built along a tree so each γ costs one difference.
    """
    out = {}
    zero = (0,) * DIM
    out[zero] = float(np.max(np.abs(K)))
    frontier = {zero: K}
    for n in range(1, order + 1):
        nxt = {}
        for g in sorted_gammas(n):
            if sum(g) != n:
                continue
            # parent: remove one from the last nonzero axis (keeps non-increasing order)
            ax = max(i for i in range(DIM) if g[i] > 0)
            parent = tuple(g[i] - (1 if i == ax else 0) for i in range(DIM))
            base = frontier[parent]
            d = np.roll(base, -1, ax) - base
            nxt[g] = d
            out[g] = float(np.max(np.abs(d)))
        frontier = nxt
    return out


def scaling_constants(L: int, j: int, m2: float, order: int, ks=(0,)) -> dict:
    """{(γ, k): sup|∇^γ C_j| · (1+m²L^{2(j−1)})^k · L^{(j−1)(2+|γ|)}}."""
    K = slice_kernel(L, j, m2, pad=order)
    sups = derivative_sups(K, order)
    out = {}
    for g, v in sups.items():
        for k in ks:
            out[(g, k)] = v * (1 + m2 * L ** (2 * (j - 1))) ** k * L ** ((j - 1) * (2 + sum(g)))
    return out


@dataclass
class ScalingReport:
    L: int
    m2: float
    ks: tuple
    order: int
    scales: list
    constants: dict  # (γ, k) -> list over scales
    slopes: dict  # (γ, k) -> least-squares slope of log c_j vs j
    stable: dict  # (γ, k) -> slope ≤ 0

    def worst(self) -> dict:
        return {k: max(max(v) for (g, kk), v in self.constants.items() if kk == k) for k in self.ks}

    def passed(self) -> bool:
        return all(self.stable.values())

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "m2": self.m2,
            "order": self.order,
            "scales": self.scales,
            "rows": [
                {"gamma": list(g), "k": k, "c_j": v, "slope": self.slopes[(g, k)], "non_increasing": self.stable[(g, k)]}
                for (g, k), v in sorted(self.constants.items())
            ],
        }


def check_scaling_estimate(decomp: CovarianceDecomposition | None, k, p: int, scales=None,
                           L: int | None = None, m2: float | None = None) -> ScalingReport:
    """Per-scale constants c_j(γ, k) for |γ| = |α|+|β| ≤ p and their trend in j.

    C_{j;x,y} depends on x − y only, so ∇_x^α∇_y^β C_j is a shifted ±∇^{α+β}C_j and
    the constant depends on γ = α+β alone.  A (γ, k) row counts as stable when the
    least-squares slope of log c_j against j over the tested scales is ≤ 0.
    """
    if decomp is not None:
        L, m2 = decomp.L, decomp.m2
        if scales is None:
            scales = list(range(1, decomp.J))
    if scales is None:
        raise ValueError("scales required without a decomposition")
    ks = tuple(k) if isinstance(k, (list, tuple)) else (k,)
    table: dict = {}
    for j in scales:
        for key, v in scaling_constants(L, j, m2, p, ks).items():
            table.setdefault(key, []).append(v)
    slopes, stable = {}, {}
    js = np.asarray(scales, dtype=float)
    for key, vals in table.items():
        y = np.log(np.maximum(np.asarray(vals), 1e-300))
        s = float(np.polyfit(js, y, 1)[0]) if len(js) > 1 else 0.0
        slopes[key] = s
        stable[key] = s <= 0.0
    return ScalingReport(L, m2, ks, p, list(scales), table, slopes, stable)


def covariance_phi_norm(kernel: np.ndarray, ell: float, p_phi: int = 4, L: int = 2, j: int = 1,
                        sups: dict | None = None) -> float:
    """ℓ^{-2} sup_{x,y} sup_{|α|+|β| ≤ p_Φ} L^{(|α|+|β|)j} |∇_x^α ∇_y^β C_{x,y}|.

    ``kernel`` must have at least p_Φ zero layers around its support.
    """
    if p_phi < 4:
        raise ValueError("p_Φ must be at least 4")
    if sups is None:
        sups = derivative_sups(kernel, p_phi)
    best = max(L ** (sum(g) * j) * v for g, v in sups.items())
    return best / (ell * ell)


def chi_weight(j: int, j_m: int) -> float:
    return 2.0 ** (-max(j - j_m, 0))


@dataclass
class CbdReport:
    L: int
    m2: float
    s: float
    j_m: int
    ell0: float
    frak_c: float
    rows: list  # dicts per scale
    min_ell0: float

    @property
    def passed(self) -> bool:
        return all(r["ok"] for r in self.rows)

    def to_dict(self) -> dict:
        return self.__dict__ | {"passed": self.passed}


def check_cbd(L: int, m2: float, scales, ell0: float | None, s: float, frak_c: float = 1.0,
              p_phi: int = 4) -> CbdReport:
    """‖C_j‖_{Φ_j(ℓ_j)} ≤ min(c, χ_j) on the given finite-range scales.

    ℓ_j = ℓ_0 L^{−j − s(j−j_m)_+} and χ_j = 2^{−(j−j_m)_+}.  The norm scales as
    ℓ_0^{−2}, so the smallest admissible ℓ_0 is reported exactly; when ``ell0`` is
    None that value is used.
    """
    from .lattice import mass_scale

    j_m = mass_scale(m2, L)
    base = []
    for j in scales:
        K = slice_kernel(L, j, m2, pad=p_phi)
        ell_unit = float(L) ** (-j - s * max(j - j_m, 0))
        n1 = covariance_phi_norm(K, ell_unit, p_phi, L, j)
        base.append((j, n1, min(frak_c, chi_weight(j, j_m))))
    need = max(math.sqrt(n1 / b) for _, n1, b in base)
    if ell0 is None:
        ell0 = need
    rows = []
    for j, n1, b in base:
        norm = n1 / ell0**2
        rows.append({"j": j, "norm": norm, "bound": b, "margin": b / norm if norm > 0 else math.inf,
                     "ok": norm <= b * (1 + 1e-12)})
    return CbdReport(L, m2, s, j_m, ell0, frak_c, rows, need)
