import pytest

_AC_LINES = []


@pytest.fixture
def ac_report():
    """Record the one-line verdict of an acceptance criterion."""
    def report(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        _AC_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _AC_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_AC_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
