import pytest

_RESULTS = pytest.StashKey[dict]()


@pytest.fixture()
def verdict(request):
    """Record ``(criterion, ok, detail)`` for the end-of-run acceptance table."""
    table = request.config.stash.setdefault(_RESULTS, {})

    def record(number: int, ok: bool, detail: str = ""):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        table[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_RESULTS, {})
    if table:
        terminalreporter.section("acceptance criteria")
        for k in sorted(table):
            terminalreporter.write_line(table[k])
