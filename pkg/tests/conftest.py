import pytest

_ACCEPTANCE = {}


class _Report:
    def __call__(self, criterion, ok, detail):
        _ACCEPTANCE[criterion] = (bool(ok), detail)
        return ok


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion."""
    return _Report()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
