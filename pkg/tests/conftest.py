import pytest

_VERDICTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """Record a named acceptance verdict; printed in the terminal summary."""

    def record(name: str, ok: bool, detail: str = "") -> None:
        _VERDICTS[name] = (bool(ok), detail)
        assert ok, f"{name}: {detail}"

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    yield
    # a test that dies before recording still gets a FAIL line
    name = getattr(item.function, "criterion_name", None)
    if name and call.when == "call" and call.excinfo is not None and name not in _VERDICTS:
        _VERDICTS[name] = (False, f"{call.excinfo.typename}: {call.excinfo.value}")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in _VERDICTS.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
