"""Monte Carlo engines for the lattice |φ|⁴ model and the weakly self-avoiding walk.

Every random number is drawn from a Philox stream keyed by ``(seed, chain)``; the
numba kernels only consume pre-drawn arrays, so results do not depend on the
number of worker threads.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .lattice import DIM, Torus, to_centred

WINDOW_C = 6.0
TARGET_ACCEPT = (0.30, 0.50)


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


def stream(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chain)])))


# ---------------------------------------------------------------- error analysis


def autocorr_time(series: np.ndarray, c: float = WINDOW_C) -> tuple:
    """Integrated autocorrelation time with Madras-Sokal windowing.

    ``series`` has shape (chains, T) or (chains, T, K).  The autocovariance is
    averaged over chains around the pooled mean.  Returns (tau, var0, window),
    each of shape () or (K,).
    """
    x = np.asarray(series, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[..., None]
    C, T, K = x.shape
    if T < 4:
        raise ValueError("series too short for autocorrelation analysis")
    d = x - x.mean(axis=(0, 1))
    n = 1 << (2 * T - 1).bit_length()
    f = np.fft.rfft(d, n=n, axis=1)
    acf = np.fft.irfft(f * f.conj(), n=n, axis=1)[:, :T, :].sum(axis=0)
    acf /= (C * (T - np.arange(T)))[:, None]
    var0 = acf[0].copy()
    safe = np.where(var0 > 0, var0, 1.0)
    rho = acf / safe
    tau_w = 0.5 + np.cumsum(rho[1:], axis=0)
    W = np.arange(1, T)[:, None]
    ok = W >= c * tau_w
    has = ok.any(axis=0)
    idx = np.where(has, ok.argmax(axis=0), T - 2)
    tau = tau_w[idx, np.arange(K)]
    tau = np.where(var0 > 0, np.maximum(tau, 0.5), 0.5)
    win = idx + 1
    if squeeze:
        return float(tau[0]), float(var0[0]), int(win[0])
    return tau, var0, win


def mean_error(series: np.ndarray) -> tuple:
    """(mean, standard error, tau) of the pooled mean of a (chains, T[, K]) series."""
    x = np.asarray(series, dtype=float)
    tau, var0, _ = autocorr_time(x)
    N = x.shape[0] * x.shape[1]
    err = np.sqrt(2 * np.asarray(tau) * np.asarray(var0) / N)
    return x.mean(axis=(0, 1)), err, tau


def gelman_rubin(series: np.ndarray) -> float:
    """Potential scale reduction R̂ of a (chains, T) series."""
    x = np.asarray(series, dtype=float)
    C, T = x.shape
    if C < 2:
        return float("nan")
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = T * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    return float(math.sqrt(((T - 1) / T * W + B / T) / W))


# ---------------------------------------------------------------- configs and results


def _config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Phi4Config:
    L: int = 2
    N: int = 2
    n: int = 1
    g: float = 1e-3
    nu: float = 0.5
    sweeps: int = 20000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    width: float = 1.0
    chains: int = 4
    bin_size: int = 20

    def __post_init__(self):
        Torus(self.L, self.N)
        if self.n < 1:
            raise ConfigError("n", "must be ≥ 1")
        if not self.g > 0:
            raise ConfigError("g", "must be > 0 for a normalisable measure")
        if not math.isfinite(self.nu):
            raise ConfigError("nu", "must be finite")
        for k in ("sweeps", "thin", "chains", "bin_size"):
            if getattr(self, k) < 1:
                raise ConfigError(k, "must be ≥ 1")
        if self.burn_in < 0:
            raise ConfigError("burn_in", "must be ≥ 0")
        if not self.width > 0:
            raise ConfigError("width", "must be > 0")
        if self.sweeps // self.thin < 4 * self.bin_size:
            raise ConfigError("sweeps", "need at least four bins of measurements per chain")

    @property
    def torus(self) -> Torus:
        return Torus(self.L, self.N)

    def to_dict(self) -> dict:
        return {"model": "phi4", **asdict(self)}


@dataclass(frozen=True)
class WalkConfig:
    g: float = 0.0
    nu: float = 0.5
    radius: float = 3.0
    samples: int = 1_000_000
    seed: int = 0
    chains: int = 4
    torus_M: int | None = None
    batch: int = 50_000

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError("nu", "must be > 0 (the sampled time law is Exp(nu))")
        if not self.g >= 0:
            raise ConfigError("g", "must be ≥ 0")
        if self.samples < self.chains * 2:
            raise ConfigError("samples", "need at least two samples per chain")
        if self.chains < 1:
            raise ConfigError("chains", "must be ≥ 1")
        if self.batch < 1:
            raise ConfigError("batch", "must be ≥ 1")
        if not self.radius >= 0:
            raise ConfigError("radius", "must be ≥ 0")
        if self.torus_M is not None and self.torus_M < 1:
            raise ConfigError("torus_M", "must be ≥ 1")

    def targets(self) -> np.ndarray:
        R = int(math.floor(self.radius))
        ax = np.arange(-R, R + 1)
        pts = np.stack(np.meshgrid(*(ax,) * DIM, indexing="ij"), -1).reshape(-1, DIM)
        return pts[(pts**2).sum(1) <= self.radius**2 + 1e-9]

    def to_dict(self) -> dict:
        return {"model": "wsaw", **asdict(self)}


@dataclass
class McEstimate:
    """Per-site estimates of G_x with standard errors, plus χ = Σ_x Ĝ_x.

    ``series`` carries what :func:`estimate_xi_p` needs for error propagation: for
    the spin model binned per-chain tables (chains, bins, K); for the walk the
    per-sample endpoint index into ``coords`` and weight, each (chains, samples).
    """

    model: str
    coords: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    chi: float
    chi_err: float
    n_eff: float
    config: dict
    series: dict = field(repr=False, default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return _config_hash(self.config)

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    def index(self, x) -> int:
        hit = np.flatnonzero((self.coords == np.asarray(x)).all(axis=1))
        if hit.size == 0:
            raise KeyError(tuple(x))
        return int(hit[0])

    def value(self, x) -> tuple:
        i = self.index(x)
        return float(self.mean[i]), float(self.stderr[i])

    def orbit_classes(self) -> np.ndarray:
        """Label of each site's orbit under coordinate permutations and reflections."""
        keys = np.sort(np.abs(self.coords), axis=1)
        _, lab = np.unique(keys, axis=0, return_inverse=True)
        return lab.ravel()

    def orbit_average(self) -> list:
        """[(representative, mean, stderr, orbit size)] with errors from the same samples."""
        lab = self.orbit_classes()
        out = []
        for c in range(lab.max() + 1):
            members = np.flatnonzero(lab == c)
            rep = tuple(int(v) for v in np.sort(np.abs(self.coords[members[0]]))[::-1])
            if self.model == "phi4":
                s = self.series["table"][:, :, members].mean(axis=2)
                m, e, _ = mean_error(s)
            else:
                idx, w = self.series["index"], self.series["weight"]
                y = np.where(np.isin(idx, members), w, 0.0) / len(members)
                m, e = _iid_mean_error(y)
            out.append((rep, float(m), float(e), len(members)))
        return out

    def scaled(self, c: float) -> McEstimate:
        ser = dict(self.series)
        if "table" in ser:
            ser["table"] = ser["table"] * c
        if "weight" in ser:
            ser["weight"] = ser["weight"] * c
        return McEstimate(self.model, self.coords, self.mean * c, self.stderr * abs(c), self.chi * c,
                          self.chi_err * abs(c), self.n_eff, self.config, ser, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "chi": self.chi,
            "chi_err": self.chi_err,
            "n_eff": self.n_eff,
            "meta": self.meta,
            "sites": len(self.coords),
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash={self.config_hash} seed={self.seed}\n")
            fh.write("x0,x1,x2,x3,G,stderr\n")
            for c, m, e in zip(self.coords.tolist(), self.mean.tolist(), self.stderr.tolist()):
                fh.write(",".join(str(v) for v in c) + f",{m!r},{e!r}\n")


def _iid_mean_error(y: np.ndarray) -> tuple:
    flat = np.asarray(y, dtype=float).ravel()
    N = flat.size
    return float(flat.mean()), float(flat.std(ddof=1) / math.sqrt(N))


# ---------------------------------------------------------------- |φ|⁴ Metropolis


@njit(nogil=True, cache=True)
def _phi4_sweeps(phi, nbr, u, width, nu, g, thin, out):
    V, n = phi.shape
    S = u.shape[0]
    quad = 4.0 + 0.5 * nu
    accepted = 0
    for s in range(S):
        for x in range(V):
            r2 = 0.0
            for b in range(n):
                r2 += phi[x, b] * phi[x, b]
            for a in range(n):
                old = phi[x, a]
                d = width * (2.0 * u[s, x, a, 0] - 1.0)
                new = old + d
                nb = 0.0
                for k in range(nbr.shape[1]):
                    nb += phi[nbr[x, k], a]
                r2new = r2 - old * old + new * new
                dU = quad * (new * new - old * old) - d * nb + 0.25 * g * (r2new * r2new - r2 * r2)
                if dU <= 0.0 or u[s, x, a, 1] < math.exp(-dU):
                    phi[x, a] = new
                    r2 = r2new
                    accepted += 1
        if (s + 1) % thin == 0:
            out[(s + 1) // thin - 1] = phi
    return accepted


def _neighbours(M: int) -> np.ndarray:
    idx = np.arange(M**DIM).reshape((M,) * DIM)
    cols = []
    for ax in range(DIM):
        for sh in (1, -1):
            cols.append(np.roll(idx, -sh, axis=ax).ravel())
    return np.stack(cols, axis=1).astype(np.int64)


def _correlations(snap: np.ndarray, M: int) -> np.ndarray:
    """(1/(nV)) Σ_y φ_y·φ_{y+x} per snapshot, FFT order, shape (S, V)."""
    S, V, n = snap.shape
    f = snap.reshape((S,) + (M,) * DIM + (n,))
    F = np.fft.fftn(f, axes=tuple(range(1, DIM + 1)))
    P = (F * F.conj()).real.sum(axis=-1)
    C = np.fft.ifftn(P, axes=tuple(range(1, DIM + 1))).real / (V * n)
    return C.reshape(S, V)


def _phi4_chain(cfg: Phi4Config, chain: int, block: int = 500) -> dict:
    M = cfg.torus.M
    V = M**DIM
    rng = stream(cfg.seed, chain)
    nbr = _neighbours(M)
    phi = np.zeros((V, cfg.n))
    width = float(cfg.width)
    tune_every = 50
    done = 0
    history = []
    while done < cfg.burn_in:
        S = min(tune_every, cfg.burn_in - done)
        u = rng.random((S, V, cfg.n, 2))
        acc = _phi4_sweeps(phi, nbr, u, width, cfg.nu, cfg.g, S + 1, np.empty((0, V, cfg.n)))
        rate = acc / (S * V * cfg.n)
        history.append(rate)
        if rate < TARGET_ACCEPT[0] or rate > TARGET_ACCEPT[1]:
            width *= math.exp(rate - 0.4) ** 4
        done += S
    nmeas = cfg.sweeps // cfg.thin
    sweeps = nmeas * cfg.thin
    corr = np.empty((nmeas, V))
    accepted = 0
    pos = 0
    step = max(cfg.thin, (block // cfg.thin) * cfg.thin)
    while pos < nmeas:
        S = min(step, (nmeas - pos) * cfg.thin)
        u = rng.random((S, V, cfg.n, 2))
        snap = np.empty((S // cfg.thin, V, cfg.n))
        accepted += _phi4_sweeps(phi, nbr, u, width, cfg.nu, cfg.g, cfg.thin, snap)
        corr[pos : pos + len(snap)] = _correlations(snap, M)
        pos += len(snap)
    nb = nmeas // cfg.bin_size
    binned = corr[: nb * cfg.bin_size].reshape(nb, cfg.bin_size, V).mean(axis=1)
    return {"binned": binned, "acceptance": accepted / (sweeps * V * cfg.n), "width": width,
            "burn_acceptance": history[-1] if history else None}


def _run_chains(fn, cfg, threads: int) -> list:
    if threads <= 1:
        return [fn(cfg, c) for c in range(cfg.chains)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda c: fn(cfg, c), range(cfg.chains)))


def phi4_run(cfg: Phi4Config, threads: int = 1) -> McEstimate:
    """Single-site Metropolis for e^{-U} on the torus; Ĝ_x = (1/n)⟨φ_0·φ_x⟩ by translation averaging."""
    res = _run_chains(_phi4_chain, cfg, threads)
    M = cfg.torus.M
    table_fft = np.stack([r["binned"] for r in res])  # (chains, bins, V) in FFT order
    C, B, V = table_fft.shape
    perm = _centred_permutation(M)
    table = table_fft[:, :, perm]
    mean, err, _ = mean_error(table)
    chi_series = table_fft.sum(axis=2)
    chi, chi_err, chi_tau = mean_error(chi_series)
    rhat = gelman_rubin(chi_series)
    n_eff = C * B * cfg.bin_size / (2 * chi_tau * cfg.bin_size) if chi_tau > 0 else float(C * B)
    meta = {
        "acceptance": [r["acceptance"] for r in res],
        "width": [r["width"] for r in res],
        "tau_chi_bins": float(chi_tau),
        "rhat_chi": rhat,
        "converged": bool(rhat < 1.1),
        "bins_per_chain": B,
    }
    coords = cfg.torus.centred_coords()
    return McEstimate("phi4", coords, mean, err, float(chi), float(chi_err), float(n_eff), cfg.to_dict(),
                      {"table": table}, meta)


def _centred_permutation(M: int) -> np.ndarray:
    """Indices into an FFT-ordered flat array, listed in centred row-major order."""
    idx = np.arange(M**DIM).reshape((M,) * DIM)
    return to_centred(idx, DIM).ravel()


# ---------------------------------------------------------------- weakly self-avoiding walk

_OFF = 1 << 15
_BASE = 1 << 16


@njit(nogil=True, cache=True)
def _walk_batch(T, K, u, dirs, M):
    """Endpoints, I(T) and distinct-site counts for a batch of rate-8 walks.

    Sample i has K[i] jumps at sorted uniform times in [0, T[i]]; its jump times and
    directions occupy consecutive slots of ``u`` and ``dirs``.
    """
    N = T.shape[0]
    end = np.empty((N, 4), np.int64)
    I = np.empty(N)
    nsites = np.empty(N, np.int64)
    off = 0
    for i in range(N):
        k = K[i]
        times = np.sort(u[off : off + k]) * T[i]
        codes = np.empty(k + 1, np.int64)
        dur = np.empty(k + 1)
        pos = np.zeros(4, np.int64)
        prev = 0.0
        for s in range(k + 1):
            c = 0
            mult = 1
            for a in range(4):
                c += (pos[a] + 32768) * mult
                mult *= 65536
            codes[s] = c
            t = times[s] if s < k else T[i]
            dur[s] = t - prev
            prev = t
            if s < k:
                dr = dirs[off + s]
                ax = dr >> 1
                pos[ax] += 1 if (dr & 1) == 0 else -1
                if M > 0:
                    pos[ax] = pos[ax] % M
        order = np.argsort(codes, kind="mergesort")
        acc = 0.0
        loc = 0.0
        distinct = 0
        last = -1
        for s in range(k + 1):
            c = codes[order[s]]
            if c != last:
                acc += loc * loc
                loc = 0.0
                distinct += 1
                last = c
            loc += dur[order[s]]
        acc += loc * loc
        I[i] = acc
        nsites[i] = distinct
        end[i] = pos
        off += k
    return end, I, nsites


def walk_paths(rng: np.random.Generator, n: int, nu: float, M: int = 0) -> tuple:
    """Draw n paths: T ~ Exp(nu), then the walk on [0, T]. Returns (T, end, I, distinct sites)."""
    T = rng.exponential(1.0 / nu, n)
    K = rng.poisson(8.0 * T)
    if K.max(initial=0) >= _OFF:
        raise OverflowError("path too long for the site encoding")
    tot = int(K.sum())
    u = rng.random(tot)
    dirs = rng.integers(0, 2 * DIM, tot)
    end, I, ns = _walk_batch(T, K.astype(np.int64), u, dirs.astype(np.int64), int(M))
    return T, end, I, ns


def _encode(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.int64) + _OFF
    return pts[:, 0] + _BASE * (pts[:, 1] + _BASE * (pts[:, 2] + _BASE * pts[:, 3]))


def _wsaw_chain(cfg: WalkConfig, chain: int) -> dict:
    rng = stream(cfg.seed, chain)
    n = cfg.samples // cfg.chains + (1 if chain < cfg.samples % cfg.chains else 0)
    M = cfg.torus_M or 0
    codes, weights, checks = [], [], []
    done = 0
    while done < n:
        b = min(cfg.batch, n - done)
        T, end, I, ns = walk_paths(rng, b, cfg.nu, M)
        if M:
            end = _embed_arr(end, M)
        codes.append(_encode(end))
        weights.append(np.exp(-cfg.g * I) / cfg.nu)
        checks.append(bool(np.all(I >= 0) and np.all(I * ns >= T * T * (1 - 1e-12))))
        done += b
    return {"codes": np.concatenate(codes), "weight": np.concatenate(weights), "cs_ok": all(checks)}


def _embed(v: int, M: int) -> int:
    r = v % M
    return r - M if r > M // 2 else r


def _embed_arr(a: np.ndarray, M: int) -> np.ndarray:
    r = np.mod(a, M)
    return np.where(r > M // 2, r - M, r)


def _decode(codes: np.ndarray) -> np.ndarray:
    out = np.empty((len(codes), DIM), dtype=np.int64)
    c = codes.copy()
    for a in range(DIM):
        out[:, a] = c % _BASE - _OFF
        c //= _BASE
    return out


def wsaw_run(cfg: WalkConfig, threads: int = 1) -> McEstimate:
    """Ĝ_x = mean of e^{-gI(T)}/ν · 1[X(T) = x] over T ~ Exp(ν) walks.

    The table holds every observed endpoint plus the targets |x| ≤ radius (or the
    whole torus when ``torus_M`` is set), so χ̂ = Σ_x Ĝ_x = mean weight.
    Samples are independent, so standard errors are plain sample errors.
    """
    res = _run_chains(_wsaw_chain, cfg, threads)
    L = min(len(r["codes"]) for r in res)
    codes = np.stack([r["codes"][:L] for r in res])
    weight = np.stack([r["weight"][:L] for r in res])
    if cfg.torus_M:
        M = cfg.torus_M
        ax = np.array([_embed(i, M) for i in range(M)])
        ax = np.sort(ax)
        base = np.stack(np.meshgrid(*(ax,) * DIM, indexing="ij"), -1).reshape(-1, DIM)
    else:
        base = cfg.targets()
    allc = np.unique(np.concatenate([_encode(base), codes.ravel()]))
    coords = _decode(allc)
    order = np.lexsort(coords.T[::-1])
    coords = coords[order]
    allc = allc[order]
    sorter = np.argsort(allc)
    index = sorter[np.searchsorted(allc, codes, sorter=sorter)]
    N = codes.size
    K = len(coords)
    s1 = np.bincount(index.ravel(), weights=weight.ravel(), minlength=K)
    s2 = np.bincount(index.ravel(), weights=(weight**2).ravel(), minlength=K)
    mean = s1 / N
    var = np.maximum(s2 / N - mean**2, 0.0) * N / (N - 1)
    err = np.sqrt(var / N)
    chi, chi_err = _iid_mean_error(weight)
    meta = {
        "samples": int(N),
        "rhat_chi": gelman_rubin(weight),
        "cauchy_schwarz_ok": all(r["cs_ok"] for r in res),
        "max_weight": float(weight.max()),
        "min_weight": float(weight.min()),
        "lattice": f"torus M={cfg.torus_M}" if cfg.torus_M else "Z^4",
    }
    return McEstimate("wsaw", coords, mean, err, chi, chi_err, float(N), cfg.to_dict(),
                      {"index": index, "weight": weight}, meta)


# ---------------------------------------------------------------- derived estimates


def estimate_xi_p(mc: McEstimate, p: float) -> tuple:
    """(ξ̂_p, error) with ξ_p = [Σ_x |x|^p Ĝ_x / χ̂]^{1/p} and delta-method errors.

    The linearised observable is analysed with the same autocorrelation window as
    the raw series, so correlations between numerator and χ̂ are kept.
    """
    if not p > 0:
        raise ValueError(f"p must be > 0, got {p}")
    r = np.sqrt((mc.coords.astype(float) ** 2).sum(axis=1)) ** p
    if mc.model == "phi4":
        tab = mc.series["table"]
        A = tab @ r
        B = tab.sum(axis=2)
    else:
        w = mc.series["weight"]
        A = w * r[mc.series["index"]]
        B = w
    Am, Bm = float(A.mean()), float(B.mean())
    if not (Bm > 0 and Am > 0):
        raise ValueError("degenerate table: non-positive moment or susceptibility")
    xi = (Am / Bm) ** (1 / p)
    y = (xi / p) * (A / Am - B / Bm)
    if mc.model == "phi4":
        _, err, _ = mean_error(y)
    else:
        _, err = _iid_mean_error(y)
    return xi, float(err)


# ---------------------------------------------------------------- config files

_PHI4_TYPES = {"L": int, "N": int, "n": int, "g": float, "nu": float, "sweeps": int, "burn_in": int,
               "thin": int, "seed": int, "width": float, "chains": int, "bin_size": int}
_WSAW_TYPES = {"g": float, "nu": float, "radius": float, "samples": int, "seed": int, "chains": int,
               "torus_M": int, "batch": int}


def _parse_int(raw: str) -> int:
    try:
        return int(raw, 10)
    except ValueError:
        v = float(raw)  # allow 1e6
        if not v.is_integer():
            raise ValueError(f"not an integer: {raw!r}") from None
        return int(v)


def parse_config(text: str):
    """Parse an INI run file: ``[run] model = phi4|wsaw`` plus a section named after the model."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case sensitive (L, N and n differ)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError("file", str(e)) from e
    if not cp.has_option("run", "model"):
        raise ConfigError("run.model", "missing")
    model = cp.get("run", "model").strip()
    types = {"phi4": _PHI4_TYPES, "wsaw": _WSAW_TYPES}.get(model)
    if types is None:
        raise ConfigError("run.model", f"unknown model {model!r}")
    for key in cp["run"]:
        if key not in ("model", "seed"):
            raise ConfigError(f"run.{key}", "unknown key")
    sec = cp[model] if cp.has_section(model) else {}
    kw = {}
    for key, raw in sec.items():
        if key not in types:
            raise ConfigError(f"{model}.{key}", "unknown key")
        try:
            kw[key] = float(raw) if types[key] is float else _parse_int(raw)
        except ValueError as e:
            raise ConfigError(f"{model}.{key}", f"cannot parse {raw!r}") from e
    if cp.has_option("run", "seed"):
        try:
            kw.setdefault("seed", _parse_int(cp.get("run", "seed")))
        except ValueError as e:
            raise ConfigError("run.seed", f"cannot parse {cp.get('run', 'seed')!r}") from e
    try:
        return (Phi4Config if model == "phi4" else WalkConfig)(**kw)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(model, str(e)) from e


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def run(cfg, threads: int = 1) -> McEstimate:
    return phi4_run(cfg, threads) if isinstance(cfg, Phi4Config) else wsaw_run(cfg, threads)
