import sys

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from detour.model import Instance

settings.register_profile("default", max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

coefficients = st.floats(0.0, 0.99, allow_nan=False)


@st.composite
def instances(draw, k=None, point=False, two_sided=False, max_side=5):
    kk = draw(coefficients) if k is None else k
    o = draw(st.floats(0.05, 0.95))
    L = 0.0 if point else draw(st.one_of(st.just(0.0), st.floats(0.0, (1.0 - o) * 0.9)))
    lo = 1 if two_sided else 0
    left = draw(st.lists(st.floats(0.0, o, exclude_max=True), min_size=lo, max_size=max_side))
    right = draw(st.lists(st.floats(o + L, 1.0, exclude_min=True), min_size=lo, max_size=max_side))
    if not left and not right:
        left = [draw(st.floats(0.0, o, exclude_max=True))]
    return Instance(kk, o, L, sorted(left), sorted(right))


@pytest.fixture
def midpoints():
    return Instance(0.0, 0.5, 0.0, (0.0, 0.2), (0.8, 1.0))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.REPORT):
        ok, detail = mod.REPORT[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
