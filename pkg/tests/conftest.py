from __future__ import annotations

import pytest


def pytest_configure(config):
    config._criteria_lines = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion and echo it live."""
    config = request.config
    capman = config.pluginmanager.getplugin("capturemanager")

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        config._criteria_lines[number] = line
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criteria_lines", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
