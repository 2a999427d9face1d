import json
import subprocess
import sys

import pytest

from phi4xi import cli

WSAW_INI = "[run]\nmodel = wsaw\nseed = 3\n[wsaw]\nnu = 0.5\nradius = 1\nsamples = 20000\n"
PHI4_INI = "[run]\nmodel = phi4\n[phi4]\nsweeps = 800\nburn_in = 100\nbin_size = 10\nchains = 2\n"


def _run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    code = cli.main([*argv, "--out-dir", str(out)])
    man = out / "manifest.json"
    return code, out, (json.loads(man.read_text()) if man.exists() else None)


def test_green_torus(tmp_path):
    code, out, man = _run(tmp_path, "green", "--mode", "torus", "--L", "2", "--N", "2", "--m2", "0.25")
    assert code == 0
    assert man["status"] == "ok" and man["subcommand"] == "green"
    assert man["outputs"] == ["green_torus.csv"]
    assert (out / "green_torus.csv").exists()
    assert man["checks"]["residual"] < 1e-12
    for key in ("argv", "parameters", "seed", "threads", "version", "wall_time_s"):
        assert key in man


def test_green_infinite(tmp_path):
    code, out, _ = _run(tmp_path, "green", "--mode", "infinite", "--m2", "0", "--x", "0,0,0,0", "--x", "1,0,0,0")
    assert code == 0
    pts = json.loads((out / "green_infinite.json").read_text())["points"]
    assert pts[0]["value"] == pytest.approx(0.1549333902310602, rel=1e-12)
    assert pts[1]["value"] < pts[0]["value"]


@pytest.mark.parametrize("argv", [
    ["green", "--mode", "torus", "--L", "2", "--N", "2"],           # no --m2
    ["green", "--mode", "torus", "--m2", "1"],                       # no --L/--N
    ["green", "--mode", "infinite", "--m2", "1"],                    # no points
    ["green", "--mode", "infinite", "--m2", "1", "--x", "1,2,3"],    # three coordinates
    ["suite", "nonsense"],
    ["suite", "mass-sum", "--s", "1,2"],
    ["suite", "dominance", "--s", "1"],
    ["suite", "mart", "--q", "40", "--samples", "10"],
    ["frd", "--m2", "0.01", "--jmax", "1"],
    ["frd", "--m2", "0", "--jmax", "3"],
    ["flow", "--g0", "0.1"],
    [],
])
def test_usage_errors(tmp_path, argv):
    assert cli.main([*argv, "--out-dir", str(tmp_path / "o")] if argv else argv) == cli.EXIT_USAGE


def test_numeric_failure(tmp_path):
    code, _, man = _run(tmp_path, "flow", "--g0", "2", "--beta", "1", "--J", "10")
    assert code == cli.EXIT_NUMERIC
    assert man["status"] == "numeric"


def test_suite_failure(tmp_path):
    code, out, man = _run(tmp_path, "suite", "cbd", "--ell0", "1")
    assert code == cli.EXIT_SUITE
    assert man["status"] == "suite-failed" and man["passed"] is False
    assert json.loads((out / "suite_cbd.json").read_text())["passed"] is False


@pytest.mark.parametrize("argv", [
    ["suite", "moments", "--m", "0.4"],
    ["suite", "exponent", "--n", "0", "--jm", "1e4"],
    ["suite", "cbd", "--m2", "0.25", "--s", "0", "--scales", "1-3"],
    ["suite", "mart", "--samples", "50"],
])
def test_suites_pass(tmp_path, argv):
    code, out, man = _run(tmp_path, *argv)
    assert code == 0 and man["passed"] is True
    assert json.loads((out / f"suite_{argv[1]}.json").read_text())["passed"] is True


def test_flow_and_frd(tmp_path):
    code, out, man = _run(tmp_path, "flow", "--g0", "0.1", "--beta", "0.07", "--J", "100")
    assert code == 0 and (out / "flow.csv").exists()
    code, out, man = _run(tmp_path, "frd", "--m2", "0.01", "--jmax", "3", sub="frd")
    assert code == 0
    assert man["outputs"] and all((out / p).exists() for p in man["outputs"])
    assert man["checks"]["finite_range_scales"] == [1, 2, 3]


@pytest.mark.parametrize("ini", [WSAW_INI, PHI4_INI])
def test_mc_thread_invariant(tmp_path, ini):
    cfg = tmp_path / "run.ini"
    cfg.write_text(ini)
    outs = []
    for t in ("1", "3"):
        code, out, man = _run(tmp_path, "mc", str(cfg), "--threads", t, sub=f"t{t}")
        assert code == 0 and man["threads"] == int(t)
        outs.append(out)
    for name in ("estimate.csv", "estimate.json", "xi_p.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_mc_seed_override(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(WSAW_INI)
    _, out, man = _run(tmp_path, "mc", str(cfg), "--seed", "17")
    assert json.loads((out / "estimate.json").read_text())["seed"] == 17
    assert man["config_hash"] == json.loads((out / "xi_p.json").read_text())["config_hash"]


@pytest.mark.parametrize("text", ["[run]\nmodel = wsaw\n[wsaw]\nnu = -1\n", "[run]\nmodel = foo\n"])
def test_mc_bad_config(tmp_path, text):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    code, _, man = _run(tmp_path, "mc", str(cfg))
    assert code == cli.EXIT_USAGE and man["status"] == "usage"


def test_mc_missing_file(tmp_path):
    assert _run(tmp_path, "mc", str(tmp_path / "nope.ini"))[0] == cli.EXIT_USAGE


def test_out_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert cli.main(["green", "--mode", "torus", "--L", "2", "--N", "1", "--m2", "1"]) == 0
    assert (tmp_path / "envout" / "manifest.json").exists()


def test_module_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "phi4xi", "green", "--mode", "torus", "--L", "3", "--N", "1",
                        "--m2", "0.5", "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "green_torus.csv").exists()
