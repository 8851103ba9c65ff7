import pytest


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def record(request):
    """Store one acceptance verdict; printed in the terminal summary."""

    def rec(number: int, ok: bool, detail: str) -> None:
        # a criterion split over several tests keeps one merged line
        prev_ok, prev = request.config._acceptance.get(number, (True, ""))
        ok = prev_ok and ok
        detail = f"{prev}; {detail}" if prev else detail
        request.config._acceptance[number] = (ok, detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

    return rec


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        ok, detail = lines[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
