import os
import sys
import time
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_START = time.perf_counter()
_SUITE = {}


def _full_suite(session):
    here = Path(__file__).parent
    ran = {Path(str(item.fspath)).name for item in session.items}
    return ran >= {p.name for p in here.glob("test_*.py")}


@pytest.hookimpl(tryfirst=True)
def pytest_sessionfinish(session, exitstatus):
    if not _full_suite(session):
        return
    from test_acceptance import SUITE_LIMIT_S

    wall = time.perf_counter() - _START
    reporter = session.config.pluginmanager.get_plugin("terminalreporter")
    stats = reporter.stats if reporter else {}
    failed = len(stats.get("failed", [])) + len(stats.get("error", []))
    passed = len(stats.get("passed", []))
    ok = failed == 0 and wall < SUITE_LIMIT_S
    _SUITE["line"] = (f"[{'PASS' if ok else 'FAIL'}] criterion 11: property suite, {passed} passed, "
                      f"{failed} failed, {wall:.1f} s (< {SUITE_LIMIT_S:.0f} s)")
    if not ok and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = [mod.RESULTS[k] for k in sorted(mod.RESULTS)] if mod else []
    if "line" in _SUITE:
        lines.append(_SUITE["line"])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
