import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]
MODELS = ROOT / "models"

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.fixture
def models_dir() -> Path:
    return MODELS


@pytest.fixture
def report(request):
    """Attach a one-line measurement to the acceptance summary."""
    def _report(text: str):
        request.node.user_properties.append(("detail", text))
    return _report


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        n, title = mark.args
        detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        _criteria[n] = {"title": title, "passed": rep.passed, "skipped": rep.skipped, "detail": detail}


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        c = _criteria[n]
        status = "SKIP" if c["skipped"] else ("PASS" if c["passed"] else "FAIL")
        line = f"[{status}] #{n:<2} {c['title']}"
        if c["detail"]:
            line += f" | {c['detail']}"
        tr.write_line(line)
