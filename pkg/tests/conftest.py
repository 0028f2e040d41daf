import pytest


def pytest_addoption(parser):
    parser.addoption("--quick", action="store_true", help="skip the long acceptance runs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical experiment")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--quick"):
        return
    skip = pytest.mark.skip(reason="--quick")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def accept(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def record(k: int, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {k:>2} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE[k] = line
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
