import pytest

VERDICTS: dict[int, str] = {}


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[k])
    passed = sum(line.startswith("[PASS]") for line in VERDICTS.values())
    terminalreporter.write_line(f"{passed}/{len(VERDICTS)} criteria pass")
