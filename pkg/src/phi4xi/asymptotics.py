"""Predictor formulas for χ, m² and ξ_p near criticality, and the free-term dominance computation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import moments, rgflow
from .green import infinite_green
from .lattice import DIM, coalescence_scale, mass_scale, r4_table

EXACT_NORM2_MAX = 2**20


@dataclass
class AsymptoticParams:
    n: int = 0
    g: float = 0.1
    A: float = 1.0
    z0c: float = 0.0
    s: float = 0.0
    L: int = 2
    log_power: bool = True

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be ≥ 0")
        if not self.A > 0:
            raise ValueError("amplitude A must be > 0")
        if not 1 + self.z0c > 0:
            raise ValueError("need 1 + z0c > 0")

    @property
    def A_tilde(self) -> float:
        return self.A / (1 + self.z0c)

    @property
    def gamma(self) -> float:
        """(n+2)/(n+8), or 0 when the log correction is switched off."""
        return (self.n + 2) / (self.n + 8) if self.log_power else 0.0


def _check_eps(eps: float):
    if not 0 < eps <= math.exp(-1):
        raise ValueError(f"ε must lie in (0, 1/e], got {eps}")


def chi_asymptote(eps: float, params: AsymptoticParams) -> float:
    """A ε^{-1} (log ε^{-1})^{(n+2)/(n+8)}."""
    _check_eps(eps)
    return params.A / eps * math.log(1 / eps) ** params.gamma


def mass_from_eps(eps: float, params: AsymptoticParams) -> float:
    """m² = Ã^{-1} ε (log ε^{-1})^{-(n+2)/(n+8)}."""
    _check_eps(eps)
    return eps * math.log(1 / eps) ** (-params.gamma) / params.A_tilde


def susceptibility_identity_residual(eps: float, params: AsymptoticParams) -> float:
    """|χ_asym(ε) m²(ε)/(1+z0c) − 1|."""
    return abs(chi_asymptote(eps, params) * mass_from_eps(eps, params) / (1 + params.z0c) - 1)


def xi_p_prediction(eps: float, p: float, params: AsymptoticParams) -> float:
    """c_p Ã^{1/2} ε^{-1/2} (log ε^{-1})^{(n+2)/(2(n+8))}."""
    _check_eps(eps)
    return moments.cp_constant(p) * math.sqrt(params.A_tilde / eps) * math.log(1 / eps) ** (params.gamma / 2)


def epsilon_exponents(p: float, eps_grid, params: AsymptoticParams) -> dict:
    """Fit log ξ_p = a + b log ε + c log log ε^{-1}; also the plain log-log slope."""
    eps = np.asarray(eps_grid, dtype=float)
    y = np.log([xi_p_prediction(e, p, params) for e in eps])
    X = np.column_stack([np.ones_like(eps), np.log(eps), np.log(np.log(1 / eps))])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    plain = float(np.polyfit(np.log(eps), y, 1)[0])
    return {"eps_exponent": float(coef[1]), "log_exponent": float(coef[2]), "plain_slope": plain}


def remainder_bound(x, m2: float, s: float, flow: rgflow.FlowSequence, L: int = 2, C: float = 1.0) -> float:
    """C ḡ_{j_x}/|x|² × (1 if m|x| ≤ 1 else (m|x|)^{-2s})."""
    if all(int(c) == 0 for c in x):
        raise ValueError("remainder bound undefined at x = 0")
    if s < 0:
        raise ValueError("s must be ≥ 0")
    r2 = float(sum(int(c) ** 2 for c in x))
    g = flow.gbar(coalescence_scale(x, L))
    mr = math.sqrt(m2 * r2)
    return C * g / r2 * (1.0 if mr <= 1 else mr ** (-2 * s))


def remainder_scale_form(x, m2: float, s: float, flow: rgflow.FlowSequence, L: int = 2) -> float:
    """ḡ_{j_x} L^{-2j_x − 2s(j_x − j_m)_+}."""
    jx = coalescence_scale(x, L)
    jm = mass_scale(m2, L)
    return flow.gbar(jx) * float(L) ** (-2 * jx - 2 * s * max(jx - jm, 0))


# ------------------------------------------------------------------ shell sums


@lru_cache(maxsize=1)
def _r4_cum():
    r4 = r4_table(EXACT_NORM2_MAX).astype(float)
    return r4


def _shell_n_range(j: int, L: int) -> tuple:
    # S_j = {x : L^{2(j−1)} ≤ 4|x|² < L^{2j}} (S_1 starts at 0); n = |x|²
    lo = 0 if j == 1 else -(-(L ** (2 * (j - 1))) // 4)
    hi = -(-(L ** (2 * j)) // 4)  # smallest n with 4n ≥ L^{2j}
    return lo, hi


def radial_power_sum(n_lo: int, n_hi: int, q: float, exclude_origin: bool = True) -> float:
    """Σ_{x : n_lo ≤ |x|² < n_hi} |x|^q.

    Exact lattice counts (Jacobi r4) up to |x|² < 2^20; beyond that the lattice
    sum is replaced by the radial integral 2π² ∫ r^{q+3} dr, whose relative error
    is O(log R / R²) for these shells.
    """
    total = []
    if n_lo < EXACT_NORM2_MAX:
        r4 = _r4_cum()
        a = max(n_lo, 1 if exclude_origin else 0)
        b = min(n_hi, EXACT_NORM2_MAX)
        if b > a:
            n = np.arange(a, b, dtype=float)
            w = r4[a:b]
            vals = w * n ** (q / 2) if q != 0 else w
            if not exclude_origin and a == 0:
                vals[0] = 1.0 if q == 0 else 0.0
            total.append(math.fsum(vals))
    lo = max(n_lo, EXACT_NORM2_MAX)
    if n_hi > lo:
        r0, r1 = math.sqrt(lo), math.sqrt(n_hi)
        e = q + 4
        if e == 0:
            total.append(2 * math.pi**2 * math.log(r1 / r0))
        else:
            total.append(2 * math.pi**2 * (r1**e - r0**e) / e)
    return math.fsum(total)


def shell_power_sum(j: int, L: int, q: float) -> float:
    """Σ_{x∈S_j, x≠0} |x|^q."""
    lo, hi = _shell_n_range(j, L)
    return radial_power_sum(lo, hi, q)


def shell_power_sum_split(j: int, L: int, q: float, m2: float, s: float) -> float:
    """Σ_{x∈S_j, x≠0} |x|^q min(1, (m|x|)^{-2s})."""
    lo, hi = _shell_n_range(j, L)
    cut = 1.0 / m2  # |x|² at m|x| = 1
    inner_hi = min(hi, max(lo, math.floor(cut) + 1))
    parts = []
    if inner_hi > lo:
        parts.append(radial_power_sum(lo, inner_hi, q))
    if hi > inner_hi:
        parts.append(m2 ** (-s) * radial_power_sum(inner_hi, hi, q - 2 * s))
    return math.fsum(parts)


EXACT_GREEN_NORM2 = 256


@lru_cache(maxsize=256)
def green_moment_between(n_lo: int, n_hi: int, p: float) -> float:
    """Σ_{x : n_lo ≤ |x|² < n_hi, x≠0} |x|^p G_x(0,0).

    Exact quadrature per symmetry class for |x|² < 256; beyond, G_x(0,0) is
    replaced by its leading asymptotics 1/(4π²|x|²) (relative error O(|x|^{-2})).
    """
    parts = []
    b = min(n_hi, EXACT_GREEN_NORM2)
    if b > n_lo:
        R = math.isqrt(b) + 1
        acc = []
        for a1 in range(R + 1):
            for a2 in range(a1 + 1):
                for a3 in range(a2 + 1):
                    for a4 in range(a3 + 1):
                        n = a1 * a1 + a2 * a2 + a3 * a3 + a4 * a4
                        if n == 0 or n < n_lo or n >= b:
                            continue
                        key = (a4, a3, a2, a1)
                        acc.append(_orbit_size(key) * n ** (p / 2) * infinite_green(key, 0.0, 1e-10))
        parts.append(math.fsum(acc))
    lo = max(n_lo, EXACT_GREEN_NORM2)
    if n_hi > lo:
        parts.append(radial_power_sum(lo, n_hi, p - 2) / (4 * math.pi**2))
    return math.fsum(parts)


def shell_green_moment(j: int, L: int, p: float) -> float:
    """Σ_{x∈S_j, x≠0} |x|^p G_x(0,0)."""
    lo, hi = _shell_n_range(j, L)
    return green_moment_between(lo, hi, p)


def _orbit_size(v) -> int:
    nz = sum(1 for c in v if c)
    perms = math.factorial(DIM)
    for val in set(v):
        perms //= math.factorial(v.count(val))
    return perms * 2**nz


# ---------------------------------------------------------------- dominance


def dominance_flow(m2: float, n: int = 0, L: int = 2, g0: float = 3.0, extra: int = 60) -> rgflow.FlowSequence:
    """ḡ from the decomposition's β (exact on small scales), plateau beyond j_m."""
    jm = mass_scale(m2, L)
    beta = rgflow.beta_profile(n, L, m2, jm + extra)
    # beta_profile indexes β_1..β_J; the recursion uses β_j to step ḡ_j → ḡ_{j+1} from j = 0
    return rgflow.run_flow(g0, np.concatenate([[beta[0]], beta[:-1]]), j_m=jm, n=n)


@dataclass
class DominanceReport:
    p: float
    s: float
    L: int
    ms: list
    main: list
    pieces: dict  # name -> list of ratios to the main term
    decreasing: dict
    log_slope_iii: float
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.decreasing.values()) and -1.5 <= self.log_slope_iii <= -0.5

    def to_dict(self) -> dict:
        return self.__dict__ | {"passed": self.passed}


def _free_moment(p: float, m2: float) -> tuple:
    """(Σ_x |x|^p G_x(0,m²), how it was obtained)."""
    if p == 2:
        return 8.0 / (m2 * m2), "exact"
    if m2 >= 0.0025:
        return moments.free_moment_sum(p, m2).value, "computed"
    return moments.cp_power_closed(p) * m2 ** (-(p + 2) / 2), "leading-order"


def dominance_pieces(p: float, m: float, s: float, flow: rgflow.FlowSequence, L: int = 2, C: float = 1.0) -> dict:
    """The three error terms of the free-term dominance argument, each over c_p^p m^{-p}."""
    m2 = m * m
    jm = mass_scale(m2, L)
    main = moments.cp_power_closed(p) * m ** (-p)
    # (i) x with 0 < j_x ≤ j_m, weights ḡ_{j_x}, G_x(0,m²) ≤ G_x(0,0).  j_x ≤ j_m forces
    # |x| < L/(2m); the sum is evaluated on that enclosing ball, which bounds it from above
    # and does not jump with the integer part of log_L m^{-1}.
    n_cut = math.ceil(L * L / (4 * m2))
    i_terms, j = [], 2
    while True:
        lo, hi = _shell_n_range(j, L)
        if lo >= n_cut:
            break
        i_terms.append(flow.gbar(j - 1) * green_moment_between(lo, min(hi, n_cut), p))
        j += 1
    piece1 = m2 * math.fsum(i_terms)
    literal = m2 * math.fsum(flow.gbar(j - 1) * shell_green_moment(j, L, p) for j in range(2, jm + 2))
    # (ii) x with j_x > j_m: ḡ_{j_x} ≤ ḡ_{j_m+1}, sum extended to all of Z^4
    free, how = _free_moment(p, m2)
    piece2 = m2 * flow.gbar(jm + 1) * free
    # (iii) remainder bound summed shell by shell; geometric tail beyond the flow
    iii, j = [], 1
    while True:
        term = C * flow.gbar(j - 1) * shell_power_sum_split(j, L, p - 2, m2, s)
        iii.append(term)
        if j > jm + 3 and term < 1e-16 * math.fsum(iii):
            break
        j += 1
    piece3 = m2 * math.fsum(iii)
    return {"main": main, "i": piece1 / main, "i_literal": literal / main, "ii": piece2 / main, "iii": piece3 / main, "free_sum": how}


def dominance_check(p: float, ms, s: float, L: int = 2, n: int = 0, g0: float = 3.0, C: float = 1.0) -> DominanceReport:
    """Ratios of the three error pieces to the main term along a decreasing m-grid."""
    if not 2 * s > p + 2:
        raise ValueError(f"need s > (p+2)/2, got s={s}, p={p}")
    ms = sorted(ms, reverse=True)
    rows = [dominance_pieces(p, m, s, dominance_flow(m * m, n, L, g0), L, C) for m in ms]
    pieces = {k: [r[k] for r in rows] for k in ("i", "ii", "iii")}
    dec = {k: all(b < a for a, b in zip(v, v[1:])) for k, v in pieces.items()}
    x = np.log(np.log(1 / np.asarray(ms)))
    slope = float(np.polyfit(x, np.log(pieces["iii"]), 1)[0])
    return DominanceReport(p, s, L, list(ms), [r["main"] for r in rows], pieces, dec, slope,
                           {"g0": g0, "n": n, "C": C, "free_sum": [r["free_sum"] for r in rows],
                            "i_literal": [r["i_literal"] for r in rows]})
