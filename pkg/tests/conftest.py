"""Shared test utilities: acceptance-criterion reporting."""

_CRITERIA: list[tuple[int, str, bool, str]] = []


def record_criterion(num: int, name: str, ok: bool, detail: str = "") -> None:
    """Log one acceptance-criterion outcome; printed per-test and in the summary."""
    _CRITERIA.append((num, name, bool(ok), detail))
    status = "PASS" if ok else "FAIL"
    print(f"CRITERION {num} [{status}] {name}" + (f" :: {detail}" if detail else ""))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(_CRITERIA):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {status}  {name}" + (f"  [{detail}]" if detail else ""))
