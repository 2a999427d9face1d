"""Field norms Φ_j(ℓ), the fluctuation-field regulator, and norm-parameter schedules."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .lattice import DIM

P_PHI = 4
LEGACY_CONST = 2


class PreconditionError(ValueError):
    pass


# ------------------------------------------------------------------ schedules


def _pos(x: int) -> int:
    return x if x > 0 else 0


@dataclass
class NormSchedule:
    """ℓ_j, ℓ_{σ,j}, h_j, h_{σ,j} and their legacy (s = 0) versions.

    ℓ values are exact :class:`Fraction` objects when ℓ_0 is rational; g̃ enters
    only multiplicatively and is kept as supplied.
    """

    ell0: Fraction
    k0: float
    s: int
    L: int
    j_m: int
    j_x: int
    gtilde: list = field(default_factory=list)

    def __post_init__(self):
        self.ell0 = Fraction(self.ell0)
        if self.ell0 <= 0 or self.k0 <= 0:
            raise ValueError("ℓ_0 and k_0 must be positive")
        if self.s < 0 or int(self.s) != self.s:
            raise ValueError("s must be a nonnegative integer for exact arithmetic")
        self.s = int(self.s)

    def g(self, j: int):
        if not self.gtilde:
            return 1
        return self.gtilde[min(j, len(self.gtilde) - 1)]

    def ell(self, j: int) -> Fraction:
        return self.ell0 / Fraction(self.L) ** (j + self.s * _pos(j - self.j_m))

    def ell_old(self, j: int) -> Fraction:
        return self.ell0 / Fraction(self.L) ** j

    def ell_sigma(self, j: int):
        return 2 ** _pos(j - self.j_x) * self.g(j) / self.ell(min(j, self.j_x))

    def ell_sigma_old(self, j: int):
        return 2 ** _pos(j - self.j_x) * self.g(j) / self.ell_old(min(j, self.j_x))

    def h(self, j: int) -> float:
        return self.k0 * float(self.g(j)) ** (-0.25) * float(self.L) ** (-j)

    def h_sigma(self, j: int) -> float:
        return 2.0 ** _pos(j - self.j_x) * float(self.g(j)) ** 0.25 / float(self.ell_old(min(j, self.j_x)))

    def product_ratio(self, j: int) -> Fraction:
        """(ℓ_j ℓ_{σ,j}) / (ℓ_j^old ℓ_{σ,j}^old), independent of g̃."""
        return (self.ell(j) / self.ell(min(j, self.j_x))) / (self.ell_old(j) / self.ell_old(min(j, self.j_x)))

    def product_invariant(self, j: int) -> bool:
        return self.product_ratio(j) == 1


def product_invariance_failures(sched: NormSchedule, jmax: int) -> list:
    """Scales j ≤ jmax where ℓ_jℓ_{σ,j} ≠ ℓ_j^old ℓ_{σ,j}^old exactly."""
    return [j for j in range(jmax + 1) if not sched.product_invariant(j)]


def predicted_product_failures(s: int, j_m: int, j_x: int, jmax: int) -> list:
    """Closed form of the failure set: s > 0 and j > max(j_m, j_x)."""
    if s == 0:
        return []
    return list(range(max(j_m, j_x) + 1, jmax + 1))


@dataclass
class RatioReport:
    rows: list
    legacy_violations: list
    product_ok: bool

    def to_dict(self) -> dict:
        return {"rows": self.rows, "legacy_violations": self.legacy_violations, "product_ok": self.product_ok}


def schedule_ratios(sched: NormSchedule, jmax: int, const: float = LEGACY_CONST) -> RatioReport:
    """Ratio table with the constraint flags.

    - ``second``: ℓ_{j+1}/ℓ_j ≤ 2L^{-1}.
    - ``sigma_new``: ℓ_{σ,j+1}/ℓ_{σ,j} ≤ 4L^{1+s·1_{j≥j_m}} (j < j_x), ≤ 8·g̃_{j+1}/g̃_j (j ≥ j_x).
    - ``third_legacy``: ℓ_{σ,j+1}/ℓ_{σ,j} ≤ const·L (j < j_x), ≤ const (j ≥ j_x).
    - ``product``: ℓ_{σ,j+1}ℓ_{j+1} ≤ const·ℓ_{σ,j}ℓ_j.
    """
    L = sched.L
    rows, bad = [], []
    for j in range(jmax):
        r_ell = sched.ell(j + 1) / sched.ell(j)
        r_sig = sched.ell_sigma(j + 1) / sched.ell_sigma(j)
        gr = sched.g(j + 1) / sched.g(j)
        ind = 1 if j >= sched.j_m else 0
        if j < sched.j_x:
            sig_new_ok = r_sig <= 4 * Fraction(L) ** (1 + sched.s * ind)
            third = r_sig <= const * L
        else:
            sig_new_ok = r_sig <= 8 * gr
            third = r_sig <= const
        prod = sched.ell_sigma(j + 1) * sched.ell(j + 1) <= const * sched.ell_sigma(j) * sched.ell(j)
        row = {
            "j": j,
            "ell_ratio": float(r_ell),
            "sigma_ratio": float(r_sig),
            "second": bool(r_ell <= Fraction(2, L)),
            "sigma_new": bool(sig_new_ok),
            "third_legacy": bool(third),
            "product": bool(prod),
            "h_ge_ell": bool(sched.h(j) >= float(sched.ell(j))),
        }
        rows.append(row)
        if not third:
            bad.append(j)
    product_ok = all(sched.product_invariant(j) for j in range(jmax + 1))
    return RatioReport(rows, bad, product_ok)


# ----------------------------------------------------------------- field norms


def _alphas(order: int) -> list:
    return [a for a in itertools.product(range(order + 1), repeat=DIM) if sum(a) <= order]


def derivative_fields(phi: np.ndarray, order: int = P_PHI):
    """Yield (α, ∇^α φ) for every α with |α|₁ ≤ order (forward differences, periodic)."""
    zero = (0,) * DIM
    cache = {zero: phi}
    yield zero, phi
    for n in range(1, order + 1):
        for a in _alphas(n):
            if sum(a) != n:
                continue
            ax = max(i for i in range(DIM) if a[i] > 0)
            parent = tuple(a[i] - (1 if i == ax else 0) for i in range(DIM))
            base = cache[parent]
            d = np.roll(base, -1, ax) - base
            cache[a] = d
            yield a, d
        # drop levels that can no longer be parents
        cache = {k: v for k, v in cache.items() if sum(k) >= n}


def _weighted_sup(phi: np.ndarray, j: int, L: int, order: int, mask=None) -> float:
    best = 0.0
    for a, d in derivative_fields(phi, order):
        v = np.abs(d)
        if v.ndim > DIM:
            v = v.max(axis=tuple(range(DIM, v.ndim)))
        if mask is not None:
            if not mask.any():
                return 0.0
            v = v[mask]
        best = max(best, float(L) ** (j * sum(a)) * float(v.max()))
    return best


def field_phi_norm(phi: np.ndarray, j: int, ell: float, p_phi: int = P_PHI, L: int = 2) -> float:
    """ℓ^{-1} sup_x sup_{|α|₁ ≤ p_Φ} L^{j|α|₁} |∇^α φ_x| (sup includes vector components)."""
    if p_phi < 4:
        raise ValueError("p_Φ must be at least 4")
    return _weighted_sup(np.asarray(phi, dtype=float), j, L, p_phi) / float(ell)


def field_phi_norm_localized(phi: np.ndarray, X: np.ndarray, j: int, ell: float, p_phi: int = P_PHI,
                             L: int = 2) -> float:
    """Stencil-restricted surrogate for inf{‖φ − f‖_{Φ_j}: f|_X = 0}.

    The sup of :func:`field_phi_norm` is taken over base points x ∈ X only; the
    value never exceeds the global norm, equals it for X = Λ, and vanishes when φ
    vanishes on X + [0, p_Φ]^4.
    """
    X = np.asarray(X, dtype=bool)
    if not X.any():
        raise ValueError("X must be nonempty")
    return _weighted_sup(np.asarray(phi, dtype=float), j, L, p_phi, mask=X) / float(ell)


# ----------------------------------------------------------------- regulator


def block_index(M: int, side: int) -> np.ndarray:
    """Block label of each FFT-ordered residue; blocks are [k·side, (k+1)·side) anchored at the origin."""
    if M % side:
        raise ValueError(f"block side {side} does not divide torus side {M}")
    return np.arange(M) // side


def polymer_blocks(X: np.ndarray, side: int) -> list:
    """Blocks (as index tuples) making up X; raises unless X is a union of blocks."""
    X = np.asarray(X, dtype=bool)
    M = X.shape[0]
    b = block_index(M, side)
    nb = M // side
    labels = np.zeros(X.shape, dtype=np.int64)
    for ax in range(DIM):
        shape = [1] * DIM
        shape[ax] = M
        labels = labels * nb + b.reshape(shape)
    inside = np.bincount(labels[X].ravel(), minlength=nb**DIM)
    full = side**DIM
    if np.any((inside != 0) & (inside != full)):
        raise ValueError("X is not a union of scale-j blocks")
    return [tuple(np.unravel_index(i, (nb,) * DIM)) for i in np.nonzero(inside)[0]]


def block_neighbourhood(block: tuple, side: int, M: int, reach: int = 2**DIM) -> np.ndarray:
    """B^□: blocks within ℓ∞ block distance ``reach`` of B (periodic), as a site mask."""
    b = block_index(M, side)
    nb = M // side
    keep = np.zeros(nb, dtype=bool)
    mask = np.ones((M,) * DIM, dtype=bool)
    for ax in range(DIM):
        keep[:] = False
        for dlt in range(-reach, reach + 1):
            keep[(block[ax] + dlt) % nb] = True
        shape = [1] * DIM
        shape[ax] = M
        mask &= keep[b].reshape(shape)
    return mask


def log_regulator_G(X: np.ndarray, phi: np.ndarray, j: int, ell: float, L: int, p_phi: int = P_PHI) -> float:
    """log G_j(X, φ) = Σ_{B⊂X} ‖φ‖²_{Φ_j(B^□, ℓ_j)}."""
    side = L**j
    M = np.asarray(X).shape[0]
    terms = []
    for B in polymer_blocks(X, side):
        v = field_phi_norm_localized(phi, block_neighbourhood(B, side, M), j, ell, p_phi, L)
        terms.append(v * v)
    return math.fsum(terms)


def regulator_G(X: np.ndarray, phi: np.ndarray, j: int, ell: float, L: int, p_phi: int = P_PHI) -> float:
    """Π_{x∈X} exp(|B_x|^{-1} ‖φ‖²_{Φ_j(B_x^□, ℓ_j)}) = Π_{B⊂X} exp(‖φ‖²_{Φ_j(B^□, ℓ_j)}); inf on overflow."""
    lg = log_regulator_G(X, phi, j, ell, L, p_phi)
    return math.exp(lg) if lg < 709.0 else math.inf


# ----------------------------------------------------------------- field samples


def sample_field(M: int, law: str, seed: int, index: int = 0, n: int = 1) -> np.ndarray:
    """Reproducible test fields of shape (M,)*4 (+ (n,) when n > 1)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))
    shape = (M,) * DIM + ((n,) if n > 1 else ())
    if law == "iid-gaussian":
        return rng.standard_normal(shape)
    if law == "smoothed":
        f = rng.standard_normal(shape)
        for _ in range(3):
            acc = 8.0 * f
            for ax in range(DIM):
                acc = acc + np.roll(f, 1, ax) + np.roll(f, -1, ax)
            f = acc / 16.0
        return f
    if law == "adversarial-plane-wave":
        x = np.indices((M,) * DIM).sum(axis=0)
        amp = rng.uniform(0.5, 2.0)
        f = amp * np.cos(np.pi * x + rng.uniform(0, 2 * np.pi))
        return f if n == 1 else np.repeat(f[..., None], n, axis=-1)
    raise ValueError(f"unknown field law {law!r}")


@dataclass
class MartReport:
    q: float
    s: float
    L: int
    scales: list
    samples: int
    worst_norm_ratio: float
    worst_martwant_ratio: float
    violations: int
    per_scale: dict

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return self.__dict__ | {"passed": self.passed}


def required_L(q: float, s: float) -> int:
    """Smallest integer L ≥ 2 with q L^{2−2s} ≤ 1 (None if impossible)."""
    if s <= 1:
        return None
    L = 2
    while q * L ** (2 - 2 * s) > 1:
        L += 1
    return L


def check_mart(q: float, s: float, L: int, scales, samples: int = 1000, M: int = 8, seed: int = 0,
               j_m: int = 0, laws=("iid-gaussian", "smoothed", "adversarial-plane-wave"),
               p_phi: int = P_PHI, ell0: float = 1.0) -> MartReport:
    """q‖φ‖²_{Φ_j(ℓ_j)} ≤ L^{-4}‖φ‖²_{Φ_{j+1}(ℓ_{j+1})} and the underlying weight comparison.

    Both inequalities compare the same finite set of difference values with
    larger weights on the right, so the torus side only needs to hold the
    p_Φ-stencil; a small torus keeps 10³ samples cheap.
    """
    if not q > 0:
        raise PreconditionError("q must be > 0")
    if not s > 1:
        raise PreconditionError("s must be > 1")
    if q * float(L) ** (2 - 2 * s) > 1:
        raise PreconditionError(f"q L^(2-2s) = {q * float(L) ** (2 - 2 * s):.3g} > 1; need L ≥ {required_L(q, s)}")
    if any(j < j_m for j in scales):
        raise PreconditionError("scales must satisfy j ≥ j_m")
    sched = NormSchedule(Fraction(ell0), 1.0, int(s), L, j_m, 10**9)
    worst_n, worst_w, viol = 0.0, 0.0, 0
    per = {}
    for j in scales:
        lj, lj1 = float(sched.ell(j)), float(sched.ell(j + 1))
        wn, ww, vj = 0.0, 0.0, 0
        for i in range(samples):
            phi = sample_field(M, laws[i % len(laws)], seed, index=j * 10**6 + i)
            a = field_phi_norm(phi, j, lj, p_phi, L)
            b = field_phi_norm(phi, j + 1, lj1, p_phi, L)
            rn = a / (float(L) ** (-(1 + s)) * b)
            rw = q * a * a / (float(L) ** -4 * b * b)
            wn, ww = max(wn, rn), max(ww, rw)
            if rn > 1 + 1e-12 or rw > 1 + 1e-12:
                vj += 1
        per[j] = {"worst_norm_ratio": wn, "worst_martwant_ratio": ww, "violations": vj}
        worst_n, worst_w, viol = max(worst_n, wn), max(worst_w, ww), viol + vj
    return MartReport(q, s, L, list(scales), samples, worst_n, worst_w, viol, per)


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
