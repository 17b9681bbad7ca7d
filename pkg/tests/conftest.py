def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance check, in order."""
    rows = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in nodeid:
                rows[nodeid] = "PASS" if outcome == "passed" else "FAIL"
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(rows):
        terminalreporter.write_line(f"{rows[nodeid]}  {nodeid.split('::')[-1]}")
