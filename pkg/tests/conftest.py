import pytest

_RESULTS: dict = {}
_TITLES = {
    1: "torus susceptibility identity",
    2: "c_p quadrature vs closed form",
    3: "free moment ratios",
    4: "finite-range decomposition",
    5: "covariance norm bound",
    6: "field norm contraction",
    7: "schedule algebra",
    8: "coupling flow and exponent",
    9: "mass-scale sum",
    10: "free-term dominance",
    11: "Monte Carlo regressions",
}


class Recorder:
    def __call__(self, n: int, part: str, ok: bool, detail: str = ""):
        _RESULTS.setdefault(n, []).append((part, bool(ok), detail))
        print(f"criterion {n} [{part}]: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture(scope="session")
def acceptance():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in _TITLES.items():
        parts = _RESULTS.get(n)
        if parts is None:
            tr.write_line(f"{n:2d} NOT RUN  {title}")
            continue
        ok = all(p[1] for p in parts)
        failed = [p[0] for p in parts if not p[1]]
        tail = f" (failed: {', '.join(failed)})" if failed else ""
        tr.write_line(f"{n:2d} {'PASS' if ok else 'FAIL'}  {title}{tail}")
