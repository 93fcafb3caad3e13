import pytest

RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[RESULTS] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line, then assert it."""
    def record(number, title: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  [{number:>2}] {title}: {detail}"
        request.config.stash[RESULTS].append((number, line))
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(RESULTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: (isinstance(x[0], str), str(x[0]).zfill(3))):
            terminalreporter.write_line(line)
