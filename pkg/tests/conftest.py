import pytest

from cachemimo.lp import ProblemInstance, solve


@pytest.fixture(scope="session")
def twelve_user_instance():
    return ProblemInstance(tuple(float(i) for i in range(1, 13)), N=2, M=2)


@pytest.fixture(scope="session")
def twelve_user_solution(twelve_user_instance):
    return solve(twelve_user_instance)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""

    def _report(name, ok, detail):
        ACCEPTANCE_LINES.append(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
