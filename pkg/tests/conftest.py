import pytest

# filled by test_acceptance.verdict(); one entry per acceptance criterion
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def verdicts():
    return VERDICTS
