import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_RESULTS = pytest.StashKey[dict]()

CRITERIA = {
    1: "Geometry closure",
    2: "Channel oracle",
    3: "LOS power ratio",
    4: "OFDM analytics",
    5: "Simulation vs theory",
    6: "SNR targets",
    7: "Spectral pipeline closure",
    8: "Worked-sample arithmetic",
    9: "Coherence",
    10: "Monte Carlo",
    11: "Determinism",
}


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def acceptance(request):
    """record(criterion, passed, detail): one summary line per criterion."""
    results = request.config.stash[_RESULTS]

    def record(criterion, passed, detail):
        results[criterion] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    tr = terminalreporter
    tr.section("ACCEPTANCE CRITERIA")
    for k, name in CRITERIA.items():
        if k in results:
            ok, detail = results[k]
            tr.write_line(f"{'PASS' if ok else 'FAIL'}  {k:2d}. {name}: {detail}")
        else:
            tr.write_line(f"FAIL  {k:2d}. {name}: not evaluated in this run")
