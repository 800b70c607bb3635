import pytest

# criterion number -> list of (part, ok, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(autouse=True, scope="session")
def _map_cache(tmp_path_factory):
    # keep inversion-map artifacts out of the user's home directory
    mp = pytest.MonkeyPatch()
    mp.setenv("REDMOMENT_CACHE_DIR", str(tmp_path_factory.mktemp("maps")))
    yield
    mp.undo()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        details = "; ".join(f"{name} {'ok' if ok else 'FAILED'} ({detail})" for name, ok, detail in parts)
        terminalreporter.write_line(f"criterion {number}: {status}  {details}")
