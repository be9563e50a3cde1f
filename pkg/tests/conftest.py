import sys


def pytest_terminal_summary(terminalreporter):
    lines = [line for mod in list(sys.modules.values()) for line in getattr(mod, "ACCEPTANCE_LINES", [])]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
