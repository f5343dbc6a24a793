import pytest

from extremal_shape.geometry import build_annulus_grid, build_ball_grid, build_interval_grid

_CRITERIA: dict = {}
_NOTES: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "ran": False})
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if (e["ok"] and e["ran"]) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {e['title']}")
        for text in _NOTES.get(number, []):
            terminalreporter.write_line(f"              {text}")


@pytest.fixture
def note():
    """Attach a measured value to an acceptance criterion's summary line."""

    def add(number, text):
        _NOTES.setdefault(number, []).append(text)

    return add


@pytest.fixture(scope="session")
def disc32():
    return build_ball_grid(2, 32, 32)


@pytest.fixture(scope="session")
def disc16():
    return build_ball_grid(2, 16, 32)


@pytest.fixture(scope="session")
def ball3():
    return build_ball_grid(3, 32, 32)


@pytest.fixture(scope="session")
def annulus2():
    return build_annulus_grid(2, 0.5, 32, 32)


@pytest.fixture(scope="session")
def interval64():
    return build_interval_grid(64)
