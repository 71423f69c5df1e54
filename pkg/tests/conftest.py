import numpy as np
import pytest

from vspam import gabor


@pytest.fixture(scope="session")
def small_bank():
    return gabor.build_bank(16, levels=3, orientations=4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(number, name, ok, detail):
        line = f"ACCEPTANCE #{number:<2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("#")[1].split()[0])):
            terminalreporter.write_line(line)
