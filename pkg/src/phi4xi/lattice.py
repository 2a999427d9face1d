"""Torus geometry, discrete derivatives, shells and the two scale functions.

Arrays holding fields live in *FFT order*: array index ``i`` along an axis
stands for the residue ``i mod M``.  :func:`to_centred` reorders such an array
so that the index runs over the centred cube, which is the order used for all
written output.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

DIM = 4
DEFAULT_SHELL_CAP = 10**6


@dataclass(frozen=True)
class Torus:
    """Discrete torus of side ``M = L**N`` in ``d`` dimensions."""

    L: int
    N: int
    d: int = DIM

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"L must be an integer > 1, got {self.L}")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"N must be a nonnegative integer, got {self.N}")

    @property
    def M(self) -> int:
        return self.L ** self.N

    @property
    def shape(self) -> tuple:
        return (self.M,) * self.d

    @property
    def volume(self) -> int:
        return self.M ** self.d

    def axis_coords(self) -> np.ndarray:
        return axis_coords(self.M)

    def embed(self, site) -> tuple:
        """Map a site (tuple of residues mod M) to centred Z^d coordinates."""
        return tuple(embed_residue(int(s) % self.M, self.M) for s in site)

    def site(self, coords) -> tuple:
        """Inverse of :meth:`embed`."""
        return tuple(int(c) % self.M for c in coords)

    def centred_coords(self) -> np.ndarray:
        """All sites as an (M^d, d) integer array, row-major over the centred cube."""
        return cube_points(self.axis_coords(), self.d)

    def distance_grid(self) -> np.ndarray:
        """|embed(x)| for every site, in FFT order."""
        c = np.array([embed_residue(i, self.M) for i in range(self.M)], dtype=float)
        sq = sum(np.meshgrid(*(c * c,) * self.d, indexing="ij", sparse=True))
        return np.sqrt(np.broadcast_to(sq, self.shape))


def axis_coords(M: int) -> np.ndarray:
    """Centred coordinates along one axis of a side-M torus, in increasing order."""
    if M % 2 == 0:
        return np.arange(-M // 2 + 1, M // 2 + 1)
    return np.arange(-(M - 1) // 2, (M - 1) // 2 + 1)


def embed_residue(r: int, M: int) -> int:
    lo = -M // 2 + 1 if M % 2 == 0 else -(M - 1) // 2
    return (r - lo) % M + lo


def cube_points(coords: np.ndarray, d: int = DIM) -> np.ndarray:
    grids = np.meshgrid(*(coords,) * d, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def to_centred(arr: np.ndarray, d: int = DIM) -> np.ndarray:
    """Reorder the first d axes from FFT order to centred-cube order."""
    shift = (arr.shape[0] - 1) // 2
    return np.roll(arr, shift=(shift,) * d, axis=tuple(range(d)))


def from_centred(arr: np.ndarray, d: int = DIM) -> np.ndarray:
    shift = (arr.shape[0] - 1) // 2
    return np.roll(arr, shift=(-shift,) * d, axis=tuple(range(d)))


def _check_field(f: np.ndarray, torus: Torus | None, d: int):
    if f.ndim < d:
        raise ValueError(f"field needs at least {d} axes, got shape {f.shape}")
    if torus is not None and f.shape[:d] != torus.shape:
        raise ValueError(f"field shape {f.shape[:d]} does not match torus {torus.shape}")
    if len(set(f.shape[:d])) != 1:
        raise ValueError(f"field must be cubic, got {f.shape[:d]}")


def laplacian_apply(f: np.ndarray, torus: Torus | None = None, d: int = DIM) -> np.ndarray:
    """Nearest-neighbour Laplacian (Δf)_x = Σ_{y~x}(f_y − f_x) with periodic wrap.

    Extra trailing axes (vector components) are carried along untouched.
    """
    f = np.asarray(f)
    _check_field(f, torus, d)
    out = -2.0 * d * f
    for ax in range(d):
        out = out + np.roll(f, 1, ax) + np.roll(f, -1, ax)
    return out


def forward_diff(f: np.ndarray, axis: int) -> np.ndarray:
    """∇^e f_x = f_{x+e} − f_x on the torus."""
    return np.roll(f, -1, axis) - f


def apply_multi_diff(f: np.ndarray, alpha) -> np.ndarray:
    out = f
    for ax, k in enumerate(alpha):
        for _ in range(int(k)):
            out = forward_diff(out, ax)
    return out


def multi_indices(order: int, d: int = DIM, sorted_only: bool = False) -> list:
    """All α ∈ N^d with |α|₁ ≤ order; optionally only non-increasing ones."""
    out = [a for a in itertools.product(range(order + 1), repeat=d) if sum(a) <= order]
    if sorted_only:
        out = [a for a in out if list(a) == sorted(a, reverse=True)]
    return out


def mass_scale(m2: float, L: int) -> int:
    """j_m = ⌊log_L m^{-1}⌋, i.e. the largest j with L^j ≤ 1/m."""
    if not (0 < m2 < 1):
        raise ValueError(f"mass scale needs 0 < m^2 < 1, got {m2}")
    j = 0
    # L^{2(j+1)} m^2 <= 1  <=>  L^{j+1} <= 1/m, evaluated without a square root
    while L ** (2 * (j + 1)) * m2 <= 1.0:
        j += 1
    return j


def coalescence_scale(x, L: int) -> int:
    """j_x = max(0, ⌊log_L 2|x|⌋) computed in exact integer arithmetic."""
    r2 = int(sum(int(c) * int(c) for c in x))
    if r2 == 0:
        raise ValueError("coalescence scale undefined at x = 0")
    four = 4 * r2
    j = 0
    while L ** (2 * (j + 1)) <= four:
        j += 1
    return j


def coalescence_scale_r2(r2: np.ndarray, L: int) -> np.ndarray:
    """Vectorised j_x from integer squared norms (all > 0)."""
    r2 = np.asarray(r2, dtype=np.int64)
    if np.any(r2 <= 0):
        raise ValueError("coalescence scale undefined at x = 0")
    four = 4 * r2
    j = np.zeros(r2.shape, dtype=np.int64)
    k = 1
    while True:
        hit = L ** (2 * k) <= four
        if not hit.any():
            break
        j[hit] = k
        k += 1
    return j


def shell_index(x, L: int) -> int:
    """The j with x ∈ S_j."""
    if all(int(c) == 0 for c in x):
        return 1
    return coalescence_scale(x, L) + 1


def in_shell(x, j: int, L: int) -> bool:
    four_r2 = 4 * sum(int(c) ** 2 for c in x)
    if four_r2 >= L ** (2 * j):
        return False
    return j == 1 or four_r2 >= L ** (2 * (j - 1))


def _shell_bounds(j: int, L: int) -> tuple:
    if j < 1:
        raise ValueError(f"shell index must be ≥ 1, got {j}")
    lo = 0 if j == 1 else L ** (2 * (j - 1))
    return lo, L ** (2 * j)


def shell_size_estimate(j: int, L: int) -> int:
    """Upper estimate of |S_j| used for the enumeration cap (ball volume plus margin)."""
    R = L ** j / 2
    return int(math.pi ** 2 / 2 * (R + 2) ** 4) + 1


def iter_shell(j: int, L: int, chunk_axis_values: int = 1) -> Iterator[np.ndarray]:
    """Stream the points of S_j as (n, 4) arrays, one slab of the first coordinate at a time."""
    lo, hi = _shell_bounds(j, L)
    r = math.isqrt(hi // 4 + 1) + 1
    rng = np.arange(-r, r + 1)
    rest = cube_points(rng, DIM - 1)
    rest_sq = (rest * rest).sum(axis=1)
    for x1 in range(-r, r + 1, chunk_axis_values):
        vals = np.arange(x1, min(x1 + chunk_axis_values, r + 1))
        for v in vals:
            four = 4 * (rest_sq + v * v)
            sel = (four < hi) & (four >= lo)
            if sel.any():
                pts = rest[sel]
                yield np.column_stack([np.full(len(pts), v), pts])


def shell_members(j: int, L: int, cap: int = DEFAULT_SHELL_CAP) -> tuple:
    """All points of S_j as an (n, 4) array, with n.

    Raises if the shell may hold more than ``cap`` points; use :func:`iter_shell`
    to stream larger shells.
    """
    need = shell_size_estimate(j, L)
    if need > cap:
        raise ValueError(f"shell S_{j} (L={L}) may hold up to {need} points; raise cap to at least {need}")
    parts = list(iter_shell(j, L))
    pts = np.concatenate(parts) if parts else np.zeros((0, DIM), dtype=int)
    return pts, len(pts)


def r4(n: int) -> int:
    """Number of representations of n as a sum of four squares (Jacobi)."""
    if n == 0:
        return 1
    s = 0
    for dd in range(1, math.isqrt(n) + 1):
        if n % dd == 0:
            for e in {dd, n // dd}:
                if e % 4:
                    s += e
    return 8 * s


def r4_table(nmax: int) -> np.ndarray:
    """r4(n) for n = 0..nmax via a divisor sieve."""
    sig = np.zeros(nmax + 1, dtype=np.int64)
    for dd in range(1, nmax + 1):
        if dd % 4:
            sig[dd::dd] += dd
    out = 8 * sig
    out[0] = 1
    return out
