import csv
from pathlib import Path

import pytest
from hypothesis import settings

from gselc.space import Dataset, DesignSpace, Observation

DATA = Path(__file__).parent / "data"

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# three factors at three levels, nine compounds with their process values
TABLE3 = [
    ((1, 1, 1), 10.1),
    ((1, 2, 2), 53.6),
    ((1, 3, 3), 43.8),
    ((2, 1, 2), 13.4),
    ((2, 2, 3), 46.9),
    ((2, 3, 1), 55.1),
    ((3, 1, 3), 5.7),
    ((3, 2, 1), 43.6),
    ((3, 3, 2), 47.0),
]


@pytest.fixture
def table3():
    return Dataset(tuple(Observation(p, y) for p, y in TABLE3))


@pytest.fixture
def space3():
    return DesignSpace.grid(3, 3)


@pytest.fixture
def table6_rows():
    with open(DATA / "table6_initial.csv", newline="") as fh:
        return [((int(r["A"]), int(r["B"]), int(r["C"])), float(r["y"])) for r in csv.DictReader(fh)]


@pytest.fixture
def pharma_space():
    # 5 x 34 x 241 library
    return DesignSpace((tuple(range(1, 6)), tuple(range(1, 35)), tuple(range(1, 242))), names=("A", "B", "C"))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
