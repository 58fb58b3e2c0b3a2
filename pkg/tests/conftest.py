import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dcovfdr.simulation import SimDesign, power_study, size_analysis  # noqa: E402

SIM_SEED = 2024
POWER_REPLICATES = int(os.environ.get("DCOVFDR_TEST_REPLICATES", "200"))
SIZE_RUNS = 50

_criteria = []


def record_criterion(number, title, passed, detail):
    """Remember one acceptance line for the terminal summary."""
    _criteria.append((number, title, passed, detail))


def pytest_collection_modifyitems(items):
    for item in items:
        if {"power_studies", "size_tables"} & set(getattr(item, "fixturenames", ())):
            item.add_marker(pytest.mark.slow)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_criteria):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} :: {detail}")


@pytest.fixture(scope="session")
def power_studies():
    """FDR and power runs for all three designs, shared by every test that needs them."""
    return {d: power_study(SimDesign.standard(d), algorithms=(1, 2, 3),
                           replicates=POWER_REPLICATES, seed=SIM_SEED)
            for d in (1, 2, 3)}


@pytest.fixture(scope="session")
def size_tables():
    return {d: size_analysis(SimDesign.standard(d, all_null=True), runs=SIZE_RUNS,
                             seed=SIM_SEED)[0]
            for d in (1, 2, 3)}
