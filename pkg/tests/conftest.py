import pytest

_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; fails the test unless ``soft``."""
    store = request.config.stash.setdefault(_VERDICTS, {})

    def record(number, ok, detail, soft=False):
        status = "PASS" if ok else ("WARN" if soft else "FAIL")
        line = f"criterion {number:>2}: {status}  {detail}"
        store[number] = line
        print(line)
        if not ok and not soft:
            pytest.fail(line, pytrace=False)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(store):
        terminalreporter.write_line(store[k])
