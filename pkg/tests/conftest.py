"""Shared pytest hooks: the acceptance suite reports one line per criterion."""

ACCEPTANCE = []


def record_criterion(label: str, ok: bool, detail: str, warn_only: bool = False):
    status = "PASS" if ok else ("WARN" if warn_only else "FAIL")
    ACCEPTANCE.append((label, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {label}: {detail}")
