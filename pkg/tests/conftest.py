import pytest

_VERDICTS = {}


@pytest.fixture
def verdict(request):
    """Record the outcome of an acceptance criterion for the summary block.

    Call ``verdict(name, passed, detail)``; the test then asserts ``passed``.
    """
    def record(name, passed, detail=""):
        _VERDICTS[name] = (bool(passed), detail)
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, (ok, detail) in _VERDICTS.items():
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    n_ok = sum(ok for ok, _ in _VERDICTS.values())
    tr.write_line(f"{n_ok}/{len(_VERDICTS)} acceptance criteria met")
