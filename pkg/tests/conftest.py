import pytest

from auxmi.simulation import preset_manifest, simulate

# desk-scale replicate counts used by the acceptance suite
BASIC_K = 500
EXTREME_K = 300
M = 20

ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


@pytest.fixture(scope="session")
def basic_report():
    return simulate(preset_manifest("Basic", k_reps=BASIC_K, m=M))


@pytest.fixture(scope="session")
def extreme_report():
    return simulate(preset_manifest("Extreme", k_reps=EXTREME_K, m=M))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
