import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dirichlet_scores(rng, n, L, concentration=1.0):
    """Continuous simplex scores (almost surely distinct)."""
    return rng.dirichlet(np.full(L, concentration), size=n)


def labels_from(rng, P):
    """Labels drawn from the rows of ``P`` (a calibrated base model)."""
    u = rng.random(P.shape[0])
    return np.minimum((u[:, None] >= np.cumsum(P, axis=1)).sum(axis=1), P.shape[1] - 1)


@pytest.fixture
def calib_data(rng):
    P = dirichlet_scores(rng, 3000, 4, 0.7)
    # mildly overconfident base model: true conditionals are flatter than P
    y = labels_from(rng, 0.7 * P + 0.3 / 4)
    return P, y


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion at the end of the run

ACCEPTANCE = {}  # criterion number -> summary line, filled by test_acceptance.report
_OUTCOMES = {}  # criterion number -> (test name, outcome)


def _criterion_number(nodeid):
    name = nodeid.split("::")[-1]
    if not name.startswith("test_criterion_"):
        return None
    return int(name.split("_")[2])


def pytest_runtest_logreport(report):
    num = _criterion_number(report.nodeid)
    if num is not None and (report.when == "call" or report.failed):
        _OUTCOMES[num] = (report.nodeid.split("::")[-1], report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_OUTCOMES):
        name, outcome = _OUTCOMES[num]
        line = ACCEPTANCE.get(num, f"[{'PASS' if outcome == 'passed' else 'FAIL'}] {num:2d}. {name}")
        terminalreporter.write_line(line)
