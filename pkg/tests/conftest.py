import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[bool, str]] = {}
_ACCEPTANCE_RAN = False


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records an acceptance result and asserts it."""
    global _ACCEPTANCE_RAN
    _ACCEPTANCE_RAN = True

    def report(n: int, ok: bool, detail: str) -> None:
        _CRITERIA[n] = (bool(ok), detail)
        assert ok, f"criterion {n}: {detail}"

    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RAN:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        ok, detail = _CRITERIA.get(n, (False, "not evaluated"))
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
