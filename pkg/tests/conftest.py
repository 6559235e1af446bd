import math
import sys

import pytest

from heatlab.geometry import Ball, MulticoneDomain, Opening, TruncatedCone


def two_arm_domain(arcs=((-math.pi / 4, math.pi / 4), (3 * math.pi / 4, 5 * math.pi / 4))):
    """Unit-disk core with branches C(0, arc, 1)."""
    branches = tuple(TruncatedCone((0.0, 0.0), Opening.arc(a, b), 1.0) for a, b in arcs)
    return MulticoneDomain(2, core=(Ball((0.0, 0.0), 1.0),), branches=branches)


@pytest.fixture
def half_plane():
    return MulticoneDomain.single_cone(Opening.arc(0.0, math.pi))


@pytest.fixture
def truncated_half_plane():
    return MulticoneDomain.single_cone(Opening.arc(0.0, math.pi), 1.0)


@pytest.fixture
def symmetric_domain():
    return two_arm_domain()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])
