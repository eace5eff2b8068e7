"""Echo the acceptance suite's PASS/FAIL lines in the terminal summary, even when output is captured."""

_LINES = []


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    for line in report.capstdout.splitlines():
        if line.startswith(("PASS AC", "FAIL AC")):
            _LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1][2:].rstrip(":"))):
            terminalreporter.write_line(line)
