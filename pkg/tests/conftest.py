import contextlib
import io
import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from geoflow.cli import main
from geoflow.scenario import fixtures_dir

settings.register_profile("geoflow", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("geoflow")

CRITERIA = {
    1: "blow-up time of the beta=2 force fixture",
    2: "completeness and endpoint of the beta=1 force fixture",
    3: "Bihari envelope closed form for constant g",
    4: "distance inequality saturation on the conformal fixture",
    5: "envelope dominance and no blow-up for certified fixtures",
    6: "falsified hypotheses report exact witness ratios",
    7: "lifted geodesics project onto Euler-Lagrange runs",
    8: "geometry oracles: distances, Christoffels, metric axioms",
    9: "byte-identical reports on re-runs",
}
_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if report.outcome != "skipped":
            _outcomes.setdefault(crit, []).append(report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, text in CRITERIA.items():
        results = _outcomes.get(n)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status:7s} {text}"
                                    + ("" if results is None else f" ({len(results)} tests)"))


def fixture(name: str) -> Path:
    return fixtures_dir() / f"{name}.json"


def run_cli(*args) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in args])
    return code, out.getvalue(), err.getvalue()


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
