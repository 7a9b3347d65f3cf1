import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion.

    Call ``criterion(number, checks)`` with a mapping of check name to
    (passed, detail); the line is printed in the terminal summary and the
    test fails if any check did not pass.
    """
    def record(number, checks):
        ok = all(passed for passed, _ in checks.values())
        detail = "; ".join(f"{name}: {text}{'' if passed else ' (FAIL)'}"
                           for name, (passed, text) in checks.items())
        request.config.stash[_LINES].append(f"criterion {number} {'PASS' if ok else 'FAIL'}  {detail}")
        failed = [name for name, (passed, _) in checks.items() if not passed]
        assert not failed, f"criterion {number} failed: {', '.join(failed)}"
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[_LINES]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
