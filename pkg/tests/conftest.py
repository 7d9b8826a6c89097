"""Shared pytest plumbing: the acceptance-criteria summary.

Tests in test_acceptance.py register one verdict line per criterion through
:func:`record_criterion`; the hook below prints them in a dedicated section
after the run, so the checklist survives pytest's output capture.
"""

_CRITERIA: list[tuple[str, bool, str]] = []


def record_criterion(label: str, passed: bool, detail: str = "") -> None:
    _CRITERIA.append((label, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _CRITERIA:
        status = "PASS" if passed else "FAIL"
        line = f"[{label}] {status}"
        if detail:
            line += f" - {detail}"
        terminalreporter.write_line(line)
