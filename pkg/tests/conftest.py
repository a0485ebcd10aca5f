def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance verdict lines collected by test_acceptance.py."""
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
