# one line per acceptance criterion, collected by tests/test_acceptance.py
CRITERIA_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA_LINES):
        terminalreporter.write_line(CRITERIA_LINES[k])
