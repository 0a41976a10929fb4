import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

probability = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@st.composite
def score_banks(draw, min_k=1, max_k=4):
    """Per-detector P(adversarial) vectors."""
    k = draw(st.integers(min_k, max_k))
    return draw(st.lists(probability, min_size=k, max_size=k))


@st.composite
def simplex(draw, k):
    raw = draw(st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=k, max_size=k))
    w = np.array(raw)
    return w / w.sum()


def binary_entropy(p):
    return -sum(x * math.log(x) for x in (p, 1 - p) if x > 0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
