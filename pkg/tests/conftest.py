import time

import numpy as np
import pytest

from platoon.cli import main
from platoon.lookup import build_table, load_table
from platoon.scenario import builtin_path, load_scenario

ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Remember one acceptance verdict; all verdicts are printed at the end of the run."""
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def stored_tables(tmp_path_factory):
    """Plan each shipped scenario through the command line; returns name -> (scenario, table, seconds)."""
    out = {}
    d = tmp_path_factory.mktemp("tables")
    for name in ("reconfiguration", "obstacle", "merge", "merge_highspeed"):
        tic = time.perf_counter()
        code = main(["plan", "--scenario", str(builtin_path(name)), "--out", str(d / f"{name}.json")])
        elapsed = time.perf_counter() - tic
        table = load_table(d / f"{name}.json") if code == 0 else None
        out[name] = (load_scenario(builtin_path(name)), table, elapsed, code)
    return out


@pytest.fixture(scope="session")
def lane_change_table():
    """Two-vehicle lane change planned at several switch fractions (small and quick)."""
    sc = load_scenario(builtin_path("lane_change"))
    pairs = [(sc.config(a), sc.config(b)) for a, b in sc.pairs]
    return sc, build_table(pairs, sc.rho_grid, sc)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
