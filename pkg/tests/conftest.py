import acceptance_log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance report")
        for line in acceptance_log.LINES:
            terminalreporter.line(line)
