import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def verdict(pytestconfig):
    """Record (and print) one pass/fail line for an acceptance criterion."""

    def record(number, passed, text):
        line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {text}"
        pytestconfig.stash[_LINES].append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
