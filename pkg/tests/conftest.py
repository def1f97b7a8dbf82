import pytest

ACCEPTANCE_LINES = {}


class AcceptanceRecorder:
    def record(self, criterion: str, ok: bool, detail: str) -> None:
        line = f"{criterion} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES[criterion] = line
        print(line)


@pytest.fixture
def acceptance():
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
