"""Shared test plumbing: collects acceptance-criterion verdicts and prints
one PASS/FAIL line per criterion at the end of the run."""

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record_acceptance(number: int, name: str, ok: bool, detail: str = "") -> None:
    _ACCEPTANCE[number] = (name, ok, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        name, ok, detail = _ACCEPTANCE[number]
        verdict = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"criterion {number} [{name}]: {verdict}{suffix}")
