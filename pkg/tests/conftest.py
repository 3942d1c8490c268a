import pytest

from fkground.builtins import GOLDEN_OMEGA, demo_potential, fk_quasiperiodic
from fkground.hull import solve_hull

# amplitude at which the demo hull exists and is comfortably monotone; the
# nominal demo amplitude 0.01 is beyond the hull's breakdown (see README)
SMALL_EPS = 0.002

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def small_hull():
    V = demo_potential(SMALL_EPS)
    sol = solve_hull(V, GOLDEN_OMEGA, n_trunc=32)
    return V, sol


@pytest.fixture(scope="session")
def small_hull_spec(small_hull):
    V, sol = small_hull
    return fk_quasiperiodic(V), sol.hull


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
