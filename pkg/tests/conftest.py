import os

import pytest
from hypothesis import HealthCheck, settings

from ftjsim.device import FtjParams

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def params():
    return FtjParams()


_ACCEPTANCE: dict = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or not report.nodeid.startswith("tests/test_acceptance.py"):
        return
    props = dict(report.user_properties)
    if "label" in props:
        _ACCEPTANCE[props["label"]] = (report.outcome.upper(), report.duration,
                                       props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0])):
        outcome, duration, detail = _ACCEPTANCE[label]
        outcome = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"{outcome}  {label:<40s} {duration:7.2f} s  {detail}")
