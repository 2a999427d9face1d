"""Command-line front end: ``phi4xi <subcommand> [options]``.

Exit codes: 0 success, 2 usage or precondition error, 3 numerical failure,
4 a verification suite reported a failed check.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

OUT_ENV = "PHI4XI_OUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_SUITE = 0, 2, 3, 4


class UsageError(Exception):
    pass


class SuiteFailure(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    return str(o)


def _dump(obj, path: Path):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


class Run:
    """Collects output files and writes ``manifest.json`` next to them."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out_dir or os.environ.get(OUT_ENV, "phi4xi-out"))
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list = []
        self.extra: dict = {}
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(name)
        return p

    def manifest(self, status: str):
        params = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        _dump({
            "subcommand": self.args.command,
            "argv": self.argv,
            "parameters": params,
            "seed": self.args.seed,
            "threads": self.args.threads,
            "version": _version(),
            "outputs": self.files,
            "status": status,
            "wall_time_s": time.perf_counter() - self.t0,
            **self.extra,
        }, self.out / "manifest.json")


# ---------------------------------------------------------------- parsing helpers


def _point(text: str) -> tuple:
    try:
        pts = tuple(int(v) for v in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad lattice point {text!r}") from e
    if len(pts) != 4:
        raise argparse.ArgumentTypeError(f"lattice point needs 4 coordinates, got {text!r}")
    return pts


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from e


def _scales(text: str) -> list:
    """'1-5' or '3,4,7'."""
    try:
        if "-" in text:
            a, b = text.split("-", 1)
            return list(range(int(a), int(b) + 1))
        return [int(v) for v in text.split(",")]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad scale list {text!r}") from e


def _int_like(text: str) -> int:
    try:
        v = float(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from e
    if v != int(v):
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(v)


# ---------------------------------------------------------------- subcommands


def cmd_green(args, run: Run) -> int:
    from . import green
    from .lattice import Torus

    if args.mode == "torus":
        if args.L is None or args.N is None:
            raise UsageError("--mode torus needs --L and --N")
        tab = green.torus_green(Torus(args.L, args.N), args.m2)
        tab.write_csv(run.path("green_torus.csv"))
        total = tab.total()
        run.extra["checks"] = {"sum": total, "expected_sum": 1 / args.m2, "residual": abs(args.m2 * total - 1)}
        return EXIT_OK
    pts = list(args.x or [])
    if args.radius is not None:
        tab = green.ball_green(args.radius, args.m2)
        tab.write_csv(run.path("green_ball.csv"))
    if not pts and args.radius is None:
        raise UsageError("--mode infinite needs --x or --radius")
    rows = []
    for x in pts:
        v, err = green.infinite_green(x, args.m2, with_error=True)
        rows.append({"x": list(x), "value": v, "error": err})
    if rows:
        _dump({"m2": args.m2, "points": rows}, run.path("green_infinite.json"))
    return EXIT_OK


def cmd_frd(args, run: Run) -> int:
    from . import frd
    from .lattice import Torus

    domain = None if args.N is None else Torus(args.L, args.N)
    dec = frd.decompose(args.m2, args.L, args.jmax, domain)
    sub = run.out / "frd"
    written = dec.write(sub)
    run.files.extend(str(Path("frd") / Path(p).name) for p in (written or []))
    run.extra["checks"] = {"finite_range_scales": [j for j in range(1, dec.J + 1) if dec.is_finite_range(j)]}
    return EXIT_OK


def cmd_flow(args, run: Run) -> int:
    from . import rgflow

    if args.beta is not None:
        if args.J is None:
            raise UsageError("--beta needs --J")
        flow = rgflow.run_flow(args.g0, args.beta, args.J)
    else:
        if args.m2 is None or args.J is None:
            raise UsageError("give --beta and --J, or --m2 and --J")
        beta = rgflow.beta_profile(args.n, args.L, args.m2, args.J)
        flow = rgflow.run_flow(args.g0, beta, args.J, n=args.n)
    flow.write_csv(run.path("flow.csv"))
    return EXIT_OK


def _suite_cbd(args):
    from . import frd

    reports = []
    for m2 in args.m2:
        for s in args.s:
            reports.append(frd.check_cbd(args.L, m2, args.scales, args.ell0, s).to_dict())
    return reports, all(r["passed"] for r in reports)


def _suite_mart(args):
    from . import norms

    r = norms.check_mart(args.q, args.s, args.L, args.scales or [args.jm, args.jm + 1, args.jm + 2],
                         samples=args.samples, seed=args.seed, j_m=args.jm)
    d = r.to_dict()
    return [d], d["passed"]


def _suite_mass_sum(args):
    from . import asymptotics, rgflow

    rows = []
    for p in args.p:
        a = p + 2
        for m in args.m:
            flow = asymptotics.dominance_flow(m * m, args.n, args.L, args.g0)
            total, ratio = rgflow.mass_scale_sum(a, 1, args.s, args.L, m * m, flow)
            rows.append({"p": p, "a": a, "b": 1, "m": m, "sum": total, "ratio": ratio})
    out = []
    ok = True
    for p in args.p:
        rs = [r["ratio"] for r in rows if r["p"] == p]
        spread = max(rs) / min(rs)
        ok &= spread <= 10
        out.append({"p": p, "ratios": rs, "spread": spread, "passed": spread <= 10})
    return [{"rows": rows, "summary": out}], ok


def _suite_moments(args):
    from . import moments

    rows = []
    for m in args.m:
        for res in moments.free_moment_sums(args.p, m * m):
            d = res.to_dict() | {"m": m, "deviation": res.ratio - 1, "bound": 3 * m}
            d["passed"] = abs(res.ratio - 1) <= 3 * m
            rows.append(d)
    return rows, all(r["passed"] for r in rows)


def _suite_dominance(args):
    from . import asymptotics

    r = asymptotics.dominance_check(args.p, args.m, args.s, args.L, args.n, args.g0).to_dict()
    return [r], r["passed"]


def _suite_exponent(args):
    from . import rgflow

    rows = []
    for n in args.n:
        d = rgflow.exponent_report(n, args.jm, g0=args.g0, L=args.L)
        d["passed"] = d["rel_err"] <= 0.02
        rows.append(d)
    return rows, all(r["passed"] for r in rows)


def _suite_mc_regression(args):
    from . import green, mc
    from .lattice import Torus

    pcfg = mc.Phi4Config(seed=args.seed, sweeps=args.sweeps)
    est = mc.phi4_run(pcfg, args.threads)
    again = mc.phi4_run(pcfg, max(1, args.threads // 2) if args.threads > 1 else 2)
    phi_ok = abs(est.chi - 2.0) <= 3 * est.chi_err
    phi_same = bool(np.array_equal(est.mean, again.mean) and est.chi == again.chi)
    wcfg = mc.WalkConfig(seed=args.seed, samples=args.samples)
    w = mc.wsaw_run(wcfg, args.threads)
    w2 = mc.wsaw_run(wcfg, max(1, args.threads // 2) if args.threads > 1 else 2)
    worst = 0.0
    classes = []
    for rep, mean, err, size in w.orbit_average():
        if sum(v * v for v in rep) <= 9:
            exact = green.infinite_green(rep, wcfg.nu)
            z = abs(mean - exact) / err
            worst = max(worst, z)
            classes.append({"x": rep, "estimate": mean, "stderr": err, "exact": exact, "z": z})
    w_same = bool(np.array_equal(w.mean, w2.mean))
    tab = green.torus_green(Torus(pcfg.L, pcfg.N), pcfg.nu)
    rows = [{
        "phi4": {"chi": est.chi, "chi_err": est.chi_err, "exact": 2.0, "z": (est.chi - 2) / est.chi_err,
                 "rhat": est.meta["rhat_chi"], "torus_chi": tab.total(), "bit_identical": phi_same},
        "wsaw": {"chi": w.chi, "classes": classes, "worst_z": worst, "bit_identical": w_same},
    }]
    return rows, bool(phi_ok and phi_same and worst <= 3 and w_same)


SUITES = {
    "cbd": _suite_cbd,
    "mart": _suite_mart,
    "mass-sum": _suite_mass_sum,
    "moments": _suite_moments,
    "dominance": _suite_dominance,
    "exponent": _suite_exponent,
    "mc-regression": _suite_mc_regression,
}


def cmd_suite(args, run: Run) -> int:
    rows, ok = SUITES[args.suite](args)
    _dump({"suite": args.suite, "passed": bool(ok), "results": rows}, run.path(f"suite_{args.suite}.json"))
    run.extra["passed"] = bool(ok)
    if not ok:
        raise SuiteFailure(f"suite {args.suite} failed")
    return EXIT_OK


def cmd_mc(args, run: Run) -> int:
    import dataclasses

    from . import mc

    cfg = mc.load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    est = mc.run(cfg, args.threads)
    est.write_json(run.path("estimate.json"))
    est.write_csv(run.path("estimate.csv"))
    xis = {}
    for p in args.p:
        try:
            v, e = mc.estimate_xi_p(est, p)
            xis[str(p)] = {"value": v, "error": e}
        except ValueError as exc:
            xis[str(p)] = {"error": str(exc)}
    if cfg.to_dict()["model"] == "phi4":
        from . import green

        exact = green.torus_green(cfg.torus, cfg.nu).total() if cfg.nu > 0 else None
        run.extra["free_chi"] = exact
    _dump({"xi_p": xis, "config_hash": est.config_hash, "seed": est.seed}, run.path("xi_p.json"))
    run.extra["config_hash"] = est.config_hash
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (stochastic paths)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; outputs do not depend on it")
    common.add_argument("--out-dir", default=None, help=f"output directory (default ${OUT_ENV} or ./phi4xi-out)")

    ap = argparse.ArgumentParser(prog="phi4xi", description="Free-field, flow and Monte Carlo tools for 4D |φ|⁴ and WSAW.")
    ap.add_argument("--version", action="version", version=_version())
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("green", parents=[common], help="lattice Green function tables")
    g.add_argument("--mode", choices=["torus", "infinite"], required=True)
    g.add_argument("--L", type=int)
    g.add_argument("--N", type=int)
    g.add_argument("--m2", type=float, required=True)
    g.add_argument("--x", type=_point, action="append", help="lattice point a,b,c,d (repeatable)")
    g.add_argument("--radius", type=float)
    g.set_defaults(func=cmd_green)

    f = sub.add_parser("frd", parents=[common], help="finite-range covariance decomposition")
    f.add_argument("--m2", type=float, required=True)
    f.add_argument("--L", type=int, default=2)
    f.add_argument("--jmax", type=int, required=True)
    f.add_argument("--N", type=int, help="torus exponent; omit for Z^4 slices")
    f.set_defaults(func=cmd_frd)

    fl = sub.add_parser("flow", parents=[common], help="coupling flow")
    fl.add_argument("--g0", type=float, required=True)
    fl.add_argument("--beta", type=float)
    fl.add_argument("--J", type=_int_like)
    fl.add_argument("--n", type=int, default=0)
    fl.add_argument("--L", type=int, default=2)
    fl.add_argument("--m2", type=float)
    fl.set_defaults(func=cmd_flow)

    s = sub.add_parser("suite", parents=[common], help="verification suites")
    s.add_argument("suite", choices=sorted(SUITES))
    s.add_argument("--L", type=int, default=None)
    s.add_argument("--m2", type=_floats, default=[0.25, 0.04])
    s.add_argument("--m", type=_floats, default=None)
    s.add_argument("--p", type=_floats, default=None)
    s.add_argument("--s", type=_floats, default=None)
    s.add_argument("--q", type=float, default=4.0)
    s.add_argument("--n", type=lambda t: [int(v) for v in t.split(",")], default=None)
    s.add_argument("--jm", type=_int_like, default=None)
    s.add_argument("--g0", type=float, default=None)
    s.add_argument("--scales", type=_scales, default=None)
    s.add_argument("--ell0", type=float, default=None)
    s.add_argument("--samples", type=int, default=None)
    s.add_argument("--sweeps", type=int, default=20000)
    s.set_defaults(func=cmd_suite)

    m = sub.add_parser("mc", parents=[common], help="Monte Carlo run from an INI config")
    m.add_argument("config")
    m.add_argument("--p", type=_floats, default=[1.0, 2.0])
    m.set_defaults(func=cmd_mc)
    return ap


_SUITE_DEFAULTS = {
    "cbd": {"L": 2, "s": [0.0, 2.0], "scales": [1, 2, 3, 4, 5]},
    "mart": {"L": 4, "s": 2.0, "samples": 1000, "jm": 0},
    "mass-sum": {"L": 2, "p": [1.0, 2.0], "s": 3.0, "m": [1e-2, 1e-3, 1e-4], "g0": 0.3, "n": 0},
    "moments": {"p": [1.0, 2.0], "m": [0.4, 0.2, 0.1, 0.05]},
    "dominance": {"L": 2, "p": 2.0, "s": 3.0, "m": [1e-2, 1e-3, 1e-4], "g0": 3.0, "n": 0},
    "exponent": {"L": 2, "jm": 10**6, "g0": 0.1, "n": [0, 1, 2, 8]},
    "mc-regression": {"samples": 1_000_000},
}
_SCALAR = {"mart": ("s",), "mass-sum": ("s", "n"), "dominance": ("p", "s", "n")}


def _fill_suite(args):
    defaults = _SUITE_DEFAULTS[args.suite]
    for k, v in defaults.items():
        if getattr(args, k, None) is None:
            setattr(args, k, v)
    for k in _SCALAR.get(args.suite, ()):
        v = getattr(args, k)
        if isinstance(v, list):
            if len(v) != 1:
                raise UsageError(f"suite {args.suite} takes a single --{k}")
            setattr(args, k, v[0])
    if args.seed is None:
        args.seed = 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    from .frd import DecompositionError
    from .green import QuadratureError
    from .mc import ConfigError
    from .norms import PreconditionError
    from .rgflow import FlowError

    try:
        if args.command == "suite":
            _fill_suite(args)
        run = Run(args, argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    status, code = "ok", EXIT_OK
    try:
        code = args.func(args, run)
    except SuiteFailure as e:
        print(str(e), file=sys.stderr)
        status, code = "suite-failed", EXIT_SUITE
    except (UsageError, ConfigError, PreconditionError, DecompositionError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        status, code = "usage", EXIT_USAGE
    except (QuadratureError, FlowError, ArithmeticError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        status, code = "numeric", EXIT_NUMERIC
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        status, code = "usage", EXIT_USAGE
    run.manifest(status)
    return code


if __name__ == "__main__":
    sys.exit(main())
