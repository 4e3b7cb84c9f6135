import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile(
    "repo", deadline=None, max_examples=60, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False, width=64)


def matrices(min_side=1, max_side=6, elements=finite):
    shapes = st.tuples(st.integers(min_side, max_side), st.integers(min_side, max_side))
    return shapes.flatmap(lambda s: arrays(np.float64, s, elements=elements))


@st.composite
def matrix_and_mask(draw, min_side=1, max_side=6):
    A = draw(matrices(min_side, max_side))
    mask = draw(arrays(np.bool_, A.shape))
    return A, mask


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VERDICTS = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, ok, detail):
        VERDICTS[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])
