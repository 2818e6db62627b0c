import os
import pathlib
from collections import defaultdict

import numpy as np
import pytest

ROOT = pathlib.Path(__file__).resolve().parent.parent

CRITERIA = {
    1: "ARE reproduction",
    2: "Housing Price Table 1",
    3: "Housing Price Table 2",
    4: "Classical-oracle equivalence",
    5: "Estimator oracle",
    6: "Estimating equations and identities",
    7: "Derivative checks",
    8: "Invariance suite",
    9: "Boundedness and robustness",
    10: "Monte Carlo size property",
}

_outcomes: dict[int, list[str]] = defaultdict(list)


def hprice_path() -> pathlib.Path | None:
    env = os.environ.get("BPBETA_HPRICE1")
    p = pathlib.Path(env) if env else ROOT / "data" / "hprice1.csv"
    return p if p.is_file() else None


@pytest.fixture(scope="session")
def hprice():
    p = hprice_path()
    if p is None:
        pytest.skip("hprice1.csv not found; run scripts/fetch_hprice1.py or set BPBETA_HPRICE1")
    import csv

    with open(p, newline="") as fh:
        rows = list(csv.DictReader(fh))
    y = np.array([float(r["price"]) for r in rows])
    R = np.array([[float(r[c]) for c in ("bdrms", "lotsize", "sqrft")] for r in rows])
    return p, y, R


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes[n].append("skipped" if rep.skipped else ("passed" if rep.passed else "failed"))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, name in CRITERIA.items():
        res = _outcomes.get(n)
        if not res:
            continue
        failed = res.count("failed")
        skipped = res.count("skipped")
        if failed:
            status = "FAIL"
        elif skipped == len(res):
            status = "SKIP"
        else:
            status = "PASS"
        detail = f"{res.count('passed')} passed, {failed} failed, {skipped} skipped"
        tr.write_line(f"{status} criterion {n:>2} {name}: {detail}")
