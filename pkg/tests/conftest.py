import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def _private_cache(tmp_path_factory, monkeypatch):
    """Keep fetch caches and timing logs out of the user's home directory."""
    monkeypatch.setenv("DAPMAV_CACHE_DIR", str(tmp_path_factory.mktemp("cache")))


@pytest.fixture
def verdict(capsys):
    """Record one PASS/FAIL (or SKIP) line per acceptance criterion, then assert it."""

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    def skip(name: str, reason: str) -> None:
        line = f"SKIP  {name}: {reason}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        pytest.skip(line)

    record.skip = skip
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

