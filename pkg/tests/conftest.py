from __future__ import annotations

import math
from pathlib import Path

import pytest

from orbit_bounce.model import CentralForceProblem, catalog_problem, problem_from_force

DEMOS = Path(__file__).resolve().parent.parent / "demos" / "problems"

_criteria: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome, dur = _criteria.get(name, ("PASS", 0.0))
    if report.failed:
        outcome = "FAIL"
    _criteria[name] = (outcome, dur + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        outcome, dur = _criteria[name]
        num = int(name.split("_")[2])
        label = " ".join(name.split("_")[3:])
        terminalreporter.write_line(f"criterion {num:2d} {label:<28} {outcome}  ({dur:.2f} s)")


@pytest.fixture(scope="session")
def catalog():
    return catalog_problem()


@pytest.fixture(scope="session")
def oscillator():
    """``x'' + x = 0`` with the wall at ``x = 0`` (``L = 0``)."""
    return problem_from_force("affine_forcing", {"mu": 1.0}, T=math.pi, R0=1.0)


def constant_field(value):
    """A bare scalar field ``g(t, r) = value`` with no angular data."""
    def g(t, r):
        return value + 0.0 * r
    return g


def make_problem(f, T=math.pi, R0=1.0, **kw):
    return CentralForceProblem(f=f, T=T, R0=R0, **kw)
