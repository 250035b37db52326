import pytest

ACCEPTANCE_LINES = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Record ``(criterion, ok, detail)`` results for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, {})

    def record(n: int, ok: bool, detail: str):
        lines[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
