import json
from pathlib import Path

import numpy as np
import pytest

from carleman.curve import curve_from_descriptor

ROOT = Path(__file__).resolve().parents[1]
CURVES = ROOT / "curves"


def poly(*c):
    return {"kind": "poly", "coefficients": list(c)}


def descriptor(coords, n=2, r=1, window=10.0, h_grid=0.02):
    return {"n": n, "r": r, "window": window, "h_grid": h_grid, "coordinates": coords}


def line_descriptor(**kw):
    return descriptor([[poly(0.0, 1.0)], [poly(0.0)]], **kw)


def bump_descriptor(**kw):
    return descriptor([[poly(0.0, 1.0)], [{"kind": "rational", "coefficients": [[1.0], [1.0, 0.0, 1.0]]}]], **kw)


@pytest.fixture(scope="session")
def line_curve():
    d = line_descriptor()
    return curve_from_descriptor(d, d["h_grid"])


@pytest.fixture(scope="session")
def bump_curve():
    d = bump_descriptor()
    return curve_from_descriptor(d, d["h_grid"])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def bump_graph_path():
    return CURVES / "bump_graph.json"


@pytest.fixture(scope="session")
def bump_graph_config():
    return CURVES / "config_bump_graph.json"


def load_json(path):
    return json.loads(Path(path).read_text())


class RunArtifacts:
    """One CLI run of the reference configuration, loaded back from disk."""

    def __init__(self, out: Path, status: int, seconds: float):
        from carleman.config import RunConfig
        from carleman.driver import InductionState, make_problem

        self.out, self.status, self.seconds = out, status, seconds
        self.config = RunConfig.load(CURVES / "config_bump_graph.json").replace(out=str(out))
        self.problem = make_problem(self.config)
        self.report = load_json(out / "report.json")
        self.states = [InductionState.from_json(load_json(out / f"words_{k}.json"))
                       for k in self.report["committed"]]


def run_reference(out: Path) -> RunArtifacts:
    import time

    from carleman.cli import main

    start = time.perf_counter()
    status = main(["--config", str(CURVES / "config_bump_graph.json"), "--out", str(out), "-q"])
    return RunArtifacts(out, status, time.perf_counter() - start)


@pytest.fixture(scope="session")
def reference_run(tmp_path_factory):
    return run_reference(tmp_path_factory.mktemp("run_a"))


ACCEPTANCE_LINES = {}


def record_criterion(number: int, name: str, passed: bool, detail: str = "") -> None:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
