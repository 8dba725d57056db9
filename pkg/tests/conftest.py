import pytest

# criterion number -> (title, outcome, detail)
_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def report(request):
    """Attach a one-line detail to the running acceptance criterion."""
    marker = request.node.get_closest_marker("criterion")

    def note(text: str) -> None:
        if marker is not None:
            _CRITERIA.setdefault(marker.args[0], [marker.args[1], None, ""])[2] = text

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _CRITERIA.setdefault(marker.args[0], [marker.args[1], None, ""])
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        entry[1] = "PASS" if rep.passed else "FAIL"
        if rep.failed and not entry[2]:
            entry[2] = str(rep.longrepr).strip().splitlines()[-1][:200]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[number]
        line = f"[{outcome or 'NOT RUN'}] criterion {number}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
