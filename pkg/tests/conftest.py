import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Record one part of an acceptance criterion; the summary prints one line per criterion."""
    table = request.config.stash[_RESULTS]

    def record(number: int, passed: bool, detail: str) -> bool:
        table.setdefault(number, []).append((bool(passed), detail))
        print(f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash[_RESULTS]
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        parts = table[number]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number:>2}  {'PASS' if ok else 'FAIL'}  {detail}")
