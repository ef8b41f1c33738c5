import numpy as np
import pytest

from fusiondp import impute
from helpers import hybrid_for, standardized_splits


@pytest.fixture(scope="session")
def small_splits():
    return standardized_splits(1500)


@pytest.fixture(scope="session")
def small_hybrid(small_splits):
    return hybrid_for(small_splits, impute.Imputer("knn", k=5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one pass/fail line per acceptance criterion at the end of the run
_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion") if report.user_properties else None
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[crit] = (report.outcome.upper(), dict(report.user_properties).get("title", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_CRITERIA):
        outcome, title = _CRITERIA[crit]
        verdict = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"criterion {crit}: {verdict}  {title}")
