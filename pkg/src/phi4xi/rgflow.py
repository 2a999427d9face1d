"""Coupling recursion ḡ_{j+1} = ḡ_j − β_j ḡ_j², β_j from the decomposition, and derived sums."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import frd
from .lattice import mass_scale


class FlowError(ArithmeticError):
    pass


def beta_massless_limit(n: int, L: int) -> float:
    """lim_{j→∞} β_j(0) = (n+8) log L / (8π²): each scale adds log L/(8π²) to Σ_x w_j²."""
    return (n + 8) * math.log(L) / (8 * math.pi**2)


def bubble_sums(L: int, m2: float, J: int) -> np.ndarray:
    """S_j = Σ_x w_{j;0x}² = E[W_j(λ)²] for j = 1..J (exact Gauss rule)."""
    deg = 2 * frd.slice_degree(L, J)
    x, w = frd.spectral_rule(frd.rule_size_for_degree(deg))
    W = np.zeros_like(x)
    out = []
    for j in range(1, J + 1):
        W = W + frd.slice_symbol(x, L, j, m2)
        out.append(math.fsum(w * W * W))
    return np.array(out)


def beta_from_decomposition(decomp_or_L, n: int, m2: float | None = None, J: int | None = None) -> np.ndarray:
    """β_j = (n+8) Σ_x (w_{j+1;0x}² − w_{j;0x}²), j = 1..J−1, with w_j = Σ_{i≤j} C_i.

    Accepts a :class:`frd.CovarianceDecomposition` (its finite slices are used) or
    ``(L, n, m2, J)`` directly.
    """
    if n < 0:
        raise ValueError("n must be ≥ 0")
    if isinstance(decomp_or_L, frd.CovarianceDecomposition):
        L, m2 = decomp_or_L.L, decomp_or_L.m2
        J = decomp_or_L.J - 1
    else:
        L = int(decomp_or_L)
    if J is None or J < 2:
        raise ValueError("need at least two scales to form β")
    S = bubble_sums(L, m2, J)
    return (n + 8) * np.diff(S)


def beta_direct(kernels, n: int) -> np.ndarray:
    """β_j by explicit lattice sums over kernel arrays of a common centred shape."""
    w = np.zeros_like(kernels[0])
    S = []
    for K in kernels:
        w = w + K
        S.append(math.fsum((w * w).ravel()))
    return (n + 8) * np.diff(np.array(S))


def beta_profile(n: int, L: int, m2: float, J: int, exact_upto: int = 8) -> np.ndarray:
    """β_1..β_J: exact for j ≤ exact_upto, then the massless limit below j_m and 0 from j_m on.

    Scales beyond the Gauss-rule capacity are filled by this model, which mirrors
    β_j(m²) ≈ β_j(0) for j < j_m and ≈ 0 for j ≥ j_m.
    """
    j_m = mass_scale(m2, L)
    upto = min(exact_upto, J)
    exact = list(beta_from_decomposition(L, n, m2, upto + 1)) if upto >= 1 else []
    binf = beta_massless_limit(n, L)
    rest = [binf if j < j_m else 0.0 for j in range(upto + 1, J + 1)]
    return np.array(exact + rest)


@dataclass
class FlowSequence:
    g0: float
    beta: np.ndarray
    g: np.ndarray  # ḡ_0..ḡ_J
    j_m: int | None = None
    n: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def J(self) -> int:
        return len(self.g) - 1

    def gbar(self, j: int) -> float:
        """ḡ_j; beyond the computed range the flow is continued with β = 0 (plateau)."""
        if j < 0:
            raise IndexError(j)
        return float(self.g[min(j, self.J)])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["j", "beta_j", "gbar_j"])
            for j in range(self.J + 1):
                b = float(self.beta[j]) if j < len(self.beta) else ""
                w.writerow([j, repr(b) if b != "" else "", repr(float(self.g[j]))])


def run_flow(g0: float, beta, J: int | None = None, j_m: int | None = None, n: int | None = None) -> FlowSequence:
    """ḡ_{j+1} = ḡ_j − β_j ḡ_j² for j = 0..J−1; ``beta`` is indexed from j = 0.

    A scalar β means β_j ≡ β.
    """
    if np.isscalar(beta):
        if J is None:
            raise ValueError("J required for constant β")
        beta = np.full(J, float(beta))
    beta = np.asarray(beta, dtype=float)
    if J is None:
        J = len(beta)
    if len(beta) < J:
        raise ValueError(f"β has {len(beta)} entries, need {J}")
    if not g0 > 0:
        raise FlowError(f"g0 must be > 0, got {g0}")
    if np.any(beta < 0):
        raise FlowError("β_j must be ≥ 0")
    if J and g0 * float(beta[:J].max()) >= 1:
        raise FlowError(f"g0·max β = {g0 * beta[:J].max():.3g} ≥ 1")
    g = np.empty(J + 1)
    g[0] = g0
    cur = float(g0)
    b = beta[:J].tolist()
    for j in range(J):
        cur = cur - b[j] * cur * cur
        if not cur > 0:
            raise FlowError(f"ḡ became non-positive at scale {j + 1}")
        g[j + 1] = cur
    return FlowSequence(float(g0), beta[:J].copy(), g, j_m, n)


def mass_scale_sum(a: float, b: float, s: float, L: int, m2: float, flow: FlowSequence) -> tuple:
    """(Σ_{j≥1} L^{aj − 2s(j−j_m)_+} ḡ_j^b, ratio to m^{−a} ḡ_{j_m}^b).

    Beyond the flow's last scale ḡ_j ≤ ḡ_J, so the remaining sum is bounded by a
    geometric series; it is added in full, which makes the result an upper bound
    that is exact when ḡ is constant there.
    """
    if not 2 * s > a > 0:
        raise ValueError(f"need 2s > a > 0, got a={a}, s={s}")
    if b < 0:
        raise ValueError("b must be ≥ 0")
    j_m = mass_scale(m2, L)
    J = max(flow.J, j_m + 1)
    terms = []
    for j in range(1, J + 1):
        e = a * j - 2 * s * max(j - j_m, 0)
        terms.append(L**e * flow.gbar(j) ** b)
    # j > J ≥ j_m: ratio L^{a−2s} < 1
    r = float(L) ** (a - 2 * s)
    last = L ** (a * (J + 1) - 2 * s * (J + 1 - j_m)) * flow.gbar(J) ** b
    terms.append(last / (1 - r))
    total = math.fsum(terms)
    m = math.sqrt(m2)
    return total, total / (m ** (-a) * flow.gbar(j_m) ** b)


def extract_log_exponent(n: int, j_m: int, g0: float = 0.1, L: int = 2, beta=None) -> float:
    """γ̂ = log Π_{j<j_m}(1 + (n+2)/(n+8) β_j ḡ_j) / log(ḡ_0/ḡ_{j_m}).

    The default β is the massless plateau (n+8) log L/(8π²) at every scale below j_m.
    """
    if j_m < 1:
        raise ValueError("j_m must be ≥ 1")
    if beta is None:
        beta = beta_massless_limit(n, L)
    flow = run_flow(g0, beta, j_m)
    frac = (n + 2) / (n + 8)
    bg = flow.beta[:j_m] * flow.g[:j_m]
    num = math.fsum(np.log1p(frac * bg))
    den = math.log(flow.g[0] / flow.g[j_m])
    return num / den


def exponent_report(n: int, j_m: int, **kw) -> dict:
    gam = extract_log_exponent(n, j_m, **kw)
    target = (n + 2) / (n + 8)
    return {"n": n, "j_m": j_m, "gamma_hat": gam, "target": target, "rel_err": abs(gam / target - 1)}


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
